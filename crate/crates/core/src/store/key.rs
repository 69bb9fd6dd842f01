use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    ClientGradient,
    ClientShard,
    LeafPartial,
    Level1Partial,
    Level2Partial,
    RootResult,
    ShardResult,
}

impl Role {
    pub const ALL: [Role; 7] = [
        Role::ClientGradient,
        Role::ClientShard,
        Role::LeafPartial,
        Role::Level1Partial,
        Role::Level2Partial,
        Role::RootResult,
        Role::ShardResult,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Role::ClientGradient => "client_gradient",
            Role::ClientShard => "client_shard",
            Role::LeafPartial => "leaf_partial",
            Role::Level1Partial => "level1_partial",
            Role::Level2Partial => "level2_partial",
            Role::RootResult => "root_result",
            Role::ShardResult => "shard_result",
        }
    }

    fn needs_client(self) -> bool {
        matches!(self, Role::ClientGradient | Role::ClientShard)
    }

    fn needs_shard(self) -> bool {
        matches!(self, Role::ClientShard | Role::ShardResult)
    }

    fn needs_level(self) -> bool {
        matches!(
            self,
            Role::LeafPartial | Role::Level1Partial | Role::Level2Partial
        )
    }
}

impl FromStr for Role {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Role::ALL
            .into_iter()
            .find(|r| r.as_str() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown key role {s:?}")))
    }
}

/// Object-store key. Serializes to a canonical path such as
/// `r0/client_shard/c07/s2` or `r0/leaf_partial/l1`.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ObjectKey {
    round: u32,
    role: Role,
    client_id: Option<u32>,
    shard_index: Option<u32>,
    level_index: Option<u32>,
}

impl ObjectKey {
    pub fn new(
        round: u32,
        role: Role,
        client_id: Option<u32>,
        shard_index: Option<u32>,
        level_index: Option<u32>,
    ) -> Result<Self> {
        let ok = role.needs_client() == client_id.is_some()
            && role.needs_shard() == shard_index.is_some()
            && role.needs_level() == level_index.is_some();
        if !ok {
            return Err(Error::InvalidArgument(format!(
                "key components {client_id:?}/{shard_index:?}/{level_index:?} do not fit role {}",
                role.as_str()
            )));
        }
        Ok(Self {
            round,
            role,
            client_id,
            shard_index,
            level_index,
        })
    }

    pub fn client_gradient(round: u32, client: u32) -> Self {
        Self::new(round, Role::ClientGradient, Some(client), None, None).expect("valid")
    }

    pub fn client_shard(round: u32, client: u32, shard: u32) -> Self {
        Self::new(round, Role::ClientShard, Some(client), Some(shard), None).expect("valid")
    }

    pub fn shard_result(round: u32, shard: u32) -> Self {
        Self::new(round, Role::ShardResult, None, Some(shard), None).expect("valid")
    }

    pub fn partial(round: u32, role: Role, level_index: u32) -> Result<Self> {
        Self::new(round, role, None, None, Some(level_index))
    }

    pub fn root_result(round: u32) -> Self {
        Self::new(round, Role::RootResult, None, None, None).expect("valid")
    }

    pub fn round(&self) -> u32 {
        self.round
    }

    pub fn role(&self) -> Role {
        self.role
    }

    pub fn client_id(&self) -> Option<u32> {
        self.client_id
    }

    pub fn shard_index(&self) -> Option<u32> {
        self.shard_index
    }

    pub fn level_index(&self) -> Option<u32> {
        self.level_index
    }
}

impl fmt::Display for ObjectKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "r{}/{}", self.round, self.role.as_str())?;
        if let Some(c) = self.client_id {
            write!(f, "/c{c:02}")?;
        }
        if let Some(s) = self.shard_index {
            write!(f, "/s{s}")?;
        }
        if let Some(l) = self.level_index {
            write!(f, "/l{l}")?;
        }
        Ok(())
    }
}

impl FromStr for ObjectKey {
    type Err = Error;

    fn from_str(path: &str) -> Result<Self> {
        let bad = || Error::InvalidArgument(format!("malformed key path {path:?}"));
        let num = |s: &str| s.parse::<u32>().map_err(|_| bad());
        let mut parts = path.split('/');
        let round = num(parts
            .next()
            .and_then(|p| p.strip_prefix('r'))
            .ok_or_else(bad)?)?;
        let role: Role = parts.next().ok_or_else(bad)?.parse()?;
        let (mut client, mut shard, mut level) = (None, None, None);
        for part in parts {
            let slot = match part.as_bytes().first() {
                Some(b'c') if client.is_none() && shard.is_none() && level.is_none() => &mut client,
                Some(b's') if shard.is_none() && level.is_none() => &mut shard,
                Some(b'l') if level.is_none() => &mut level,
                _ => return Err(bad()),
            };
            *slot = Some(num(&part[1..])?);
        }
        let key = ObjectKey::new(round, role, client, shard, level)?;
        // reject non-canonical spellings such as `c7` vs `c07`
        if key.to_string() != path {
            return Err(bad());
        }
        Ok(key)
    }
}

impl Serialize for ObjectKey {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}
