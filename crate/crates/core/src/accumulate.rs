//! Streaming FedAvg: a running weighted sum that is divided once at the end.
//!
//! Dividing only in [`StreamingAccumulator::finalize`] keeps the per-coordinate
//! summation order identical to [`fedavg_flat`], which makes sharded
//! aggregation bit-identical to the flat mean. Tree aggregators pass
//! [`PartialSum`]s (sum plus weight) upward instead of partial means so that
//! uneven groups still merge to the exact global mean.

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::tensor::GradientTensor;

/// Un-normalized aggregate emitted by an intermediate tree aggregator.
#[derive(Clone, Debug)]
pub struct PartialSum {
    pub sum: GradientTensor,
    pub weight: f64,
    pub contributions: u64,
}

impl PartialSum {
    pub fn byte_size(&self) -> u64 {
        self.sum.byte_size()
    }
}

#[derive(Debug)]
pub struct StreamingAccumulator {
    capacity: u64,
    running: Option<Vec<f32>>,
    phantom: Option<bool>,
    contributions: u64,
    weight_total: f64,
    peak_live_elements: u64,
    finalized: bool,
    exec: Exec,
}

impl StreamingAccumulator {
    pub fn new(capacity: u64) -> Self {
        Self::with_exec(capacity, Exec::default())
    }

    pub fn with_exec(capacity: u64, exec: Exec) -> Self {
        Self {
            capacity,
            running: None,
            phantom: None,
            contributions: 0,
            weight_total: 0.0,
            peak_live_elements: 0,
            finalized: false,
            exec,
        }
    }

    pub fn capacity(&self) -> u64 {
        self.capacity
    }

    pub fn contributions(&self) -> u64 {
        self.contributions
    }

    pub fn weight_total(&self) -> f64 {
        self.weight_total
    }

    /// Most gradient elements simultaneously live: the running sum plus the
    /// one incoming shard.
    pub fn peak_live_elements(&self) -> u64 {
        self.peak_live_elements
    }

    pub fn peak_live_bytes(&self) -> u64 {
        self.peak_live_elements * crate::tensor::BYTES_PER_PARAM
    }

    /// `running_sum += weight * shard`.
    pub fn accumulate(&mut self, shard: &GradientTensor, weight: f64) -> Result<()> {
        if !(weight > 0.0 && weight.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "weight must be positive, got {weight}"
            )));
        }
        self.add(shard, weight as f32, weight, 1)
    }

    /// Folds a lower-level partial sum in at its recorded weight.
    pub fn merge(&mut self, partial: &PartialSum) -> Result<()> {
        if !(partial.weight > 0.0) {
            return Err(Error::InvalidArgument(
                "partial sum carries no weight".into(),
            ));
        }
        self.add(&partial.sum, 1.0, partial.weight, partial.contributions)
    }

    fn add(
        &mut self,
        input: &GradientTensor,
        scale: f32,
        weight: f64,
        contributions: u64,
    ) -> Result<()> {
        self.check_open()?;
        if input.param_count() != self.capacity {
            return Err(Error::InvalidArgument(format!(
                "accumulator holds {} params, input has {}",
                self.capacity,
                input.param_count()
            )));
        }
        match (self.phantom, input.is_phantom()) {
            (Some(p), q) if p != q => {
                return Err(Error::InvalidArgument(
                    "cannot mix phantom and materialized inputs".into(),
                ))
            }
            _ => self.phantom = Some(input.is_phantom()),
        }
        let live = match input.values() {
            Ok(values) => {
                let running = self
                    .running
                    .get_or_insert_with(|| vec![0.0; self.capacity as usize]);
                self.exec.add_scaled(running, values, scale);
                (running.len() + values.len()) as u64
            }
            // phantom: the running sum is notionally resident from the first input
            Err(_) => self.capacity + input.param_count(),
        };
        self.peak_live_elements = self.peak_live_elements.max(live);
        self.contributions += contributions;
        self.weight_total += weight;
        Ok(())
    }

    /// Returns `running_sum / weight_total`. The accumulator is spent afterwards.
    pub fn finalize(&mut self) -> Result<GradientTensor> {
        let (mut running, phantom) = self.take()?;
        Ok(match running.as_mut() {
            Some(v) if !phantom => {
                self.exec.scale_div(v, self.weight_total as f32);
                GradientTensor::from_vec(running.unwrap())
            }
            _ => GradientTensor::phantom(self.capacity),
        })
    }

    /// Emits the un-normalized sum and its weight. The accumulator is spent afterwards.
    pub fn into_partial(&mut self) -> Result<PartialSum> {
        let (running, phantom) = self.take()?;
        let sum = match running {
            Some(v) if !phantom => GradientTensor::from_vec(v),
            _ => GradientTensor::phantom(self.capacity),
        };
        Ok(PartialSum {
            sum,
            weight: self.weight_total,
            contributions: self.contributions,
        })
    }

    fn take(&mut self) -> Result<(Option<Vec<f32>>, bool)> {
        self.check_open()?;
        if self.contributions == 0 {
            return Err(Error::State("finalize on an empty accumulator".into()));
        }
        self.finalized = true;
        Ok((self.running.take(), self.phantom.unwrap_or(true)))
    }

    fn check_open(&self) -> Result<()> {
        if self.finalized {
            Err(Error::State("accumulator already finalized".into()))
        } else {
            Ok(())
        }
    }
}

/// Reference FedAvg: element-wise sum in client order, divided once by N.
/// Every topology is checked against this.
pub fn fedavg_flat(gradients: &[GradientTensor]) -> Result<GradientTensor> {
    let first = gradients
        .first()
        .ok_or_else(|| Error::InvalidArgument("fedavg of zero gradients".into()))?;
    let len = first.param_count();
    let mut sum = vec![0.0f32; len as usize];
    for g in gradients {
        if g.param_count() != len {
            return Err(Error::InvalidArgument(format!(
                "gradient sizes differ: {len} vs {}",
                g.param_count()
            )));
        }
        for (s, v) in sum.iter_mut().zip(g.values()?) {
            *s += *v;
        }
    }
    let n = gradients.len() as f32;
    for s in &mut sum {
        *s /= n;
    }
    Ok(GradientTensor::from_vec(sum))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vals(t: &GradientTensor) -> Vec<f32> {
        t.values().unwrap().to_vec()
    }

    #[test]
    fn twenty_ones_average_to_ones() {
        let ones = GradientTensor::from_vec(vec![1.0; 8]);
        let mut acc = StreamingAccumulator::new(8);
        for _ in 0..20 {
            acc.accumulate(&ones, 1.0).unwrap();
        }
        assert_eq!(vals(&acc.finalize().unwrap()), vec![1.0; 8]);
    }

    #[test]
    fn two_vector_mean() {
        let mut acc = StreamingAccumulator::new(2);
        acc.accumulate(&GradientTensor::from_vec(vec![1.0, 1.0]), 1.0)
            .unwrap();
        acc.accumulate(&GradientTensor::from_vec(vec![3.0, 3.0]), 1.0)
            .unwrap();
        assert_eq!(vals(&acc.finalize().unwrap()), vec![2.0, 2.0]);
    }

    #[test]
    fn sum_over_weight() {
        let mut acc = StreamingAccumulator::new(2);
        acc.merge(&PartialSum {
            sum: GradientTensor::from_vec(vec![2.0, 4.0]),
            weight: 2.0,
            contributions: 2,
        })
        .unwrap();
        assert_eq!(vals(&acc.finalize().unwrap()), vec![1.0, 2.0]);
    }

    #[test]
    fn matches_flat_oracle_bitwise() {
        let gs: Vec<_> = (0..20)
            .map(|i| GradientTensor::random(1000, 100 + i))
            .collect();
        let mut acc = StreamingAccumulator::new(1000);
        for g in &gs {
            acc.accumulate(g, 1.0).unwrap();
        }
        assert!(acc.finalize().unwrap().bit_eq(&fedavg_flat(&gs).unwrap()));
    }

    #[test]
    fn state_errors() {
        let mut acc = StreamingAccumulator::new(2);
        assert!(matches!(acc.finalize(), Err(Error::State(_))));

        let mut acc = StreamingAccumulator::new(2);
        acc.accumulate(&GradientTensor::from_vec(vec![1.0, 2.0]), 1.0)
            .unwrap();
        acc.finalize().unwrap();
        assert!(matches!(acc.finalize(), Err(Error::State(_))));
        assert!(matches!(
            acc.accumulate(&GradientTensor::from_vec(vec![1.0, 2.0]), 1.0),
            Err(Error::State(_))
        ));
    }

    #[test]
    fn argument_errors() {
        let mut acc = StreamingAccumulator::new(2);
        assert!(matches!(
            acc.accumulate(&GradientTensor::from_vec(vec![1.0]), 1.0),
            Err(Error::InvalidArgument(_))
        ));
        assert!(matches!(
            acc.accumulate(&GradientTensor::from_vec(vec![1.0, 1.0]), 0.0),
            Err(Error::InvalidArgument(_))
        ));
        acc.accumulate(&GradientTensor::from_vec(vec![1.0, 1.0]), 1.0)
            .unwrap();
        assert!(matches!(
            acc.accumulate(&GradientTensor::phantom(2), 1.0),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn phantom_vgg_shard_peak_is_two_buffers() {
        let shard = GradientTensor::phantom_mb(512.3 / 4.0);
        let mut acc = StreamingAccumulator::new(shard.param_count());
        for _ in 0..20 {
            acc.accumulate(&shard, 1.0).unwrap();
        }
        let out = acc.finalize().unwrap();
        assert!(out.is_phantom());
        let peak_mb = crate::tensor::mb_of_bytes(acc.peak_live_bytes());
        assert!((peak_mb - 256.15).abs() < 0.01, "{peak_mb}");
    }

    #[test]
    fn fedavg_flat_cases() {
        let g = GradientTensor::random(5, 9);
        assert!(fedavg_flat(std::slice::from_ref(&g)).unwrap().bit_eq(&g));
        let m = fedavg_flat(&[
            GradientTensor::from_vec(vec![0.0, 0.0]),
            GradientTensor::from_vec(vec![2.0, 4.0]),
        ])
        .unwrap();
        assert_eq!(vals(&m), vec![1.0, 2.0]);
        assert!(fedavg_flat(&[]).is_err());
        assert!(
            fedavg_flat(&[GradientTensor::random(2, 1), GradientTensor::random(3, 1)]).is_err()
        );
        assert!(fedavg_flat(&[GradientTensor::phantom(2)]).is_err());
    }
}
