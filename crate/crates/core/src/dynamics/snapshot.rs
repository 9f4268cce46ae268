//! Binary snapshot container shared by the simulator and the PDE solver.
//!
//! Layout, little-endian throughout:
//!
//! | bytes | field |
//! |-------|-------|
//! | 4     | magic `HLSN` |
//! | 1     | format version (1) |
//! | 1     | kind: 0 = occupancy bits, 1 = `f64` fields |
//! | 2     | dimension `d` (u16) |
//! | 4     | scale (u32): `N` for occupancy, `M` for fields |
//! | 4     | number of velocities (u32) |
//! | 16 each | velocities: `d` pairs of (i64 numerator, i64 denominator) |
//! | 8     | time (f64) |
//! | 8     | payload length in bytes (u64) |
//! | ...   | payload |
//!
//! Occupancy payload: one bit per `(site, v)` in site-major, velocity-minor
//! order, packed least-significant bit first. Field payload: `f64` values,
//! node-major, component-minor, nodes numbered with `x_1` fastest.

use std::io::{Read, Write};

use num_rational::Rational64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Velocity, VelocitySet};

use super::lattice::{Configuration, Lattice};

const MAGIC: &[u8; 4] = b"HLSN";
const VERSION: u8 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum SnapshotData {
    /// One word per site, bit `v` = velocity `v`.
    Occupancy { words: Vec<u64> },
    /// Node-major, component-minor values.
    Fields { values: Vec<f64> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub dim: usize,
    pub scale: usize,
    /// Velocities as `(numerator, denominator)` per component.
    pub velocities: Vec<Vec<(i64, i64)>>,
    pub time: f64,
    pub data: SnapshotData,
}

fn velocity_pairs(vs: &VelocitySet) -> Vec<Vec<(i64, i64)>> {
    vs.velocities()
        .iter()
        .map(|v| v.components().iter().map(|c| (*c.numer(), *c.denom())).collect())
        .collect()
}

impl Snapshot {
    pub fn from_configuration(config: &Configuration, vs: &VelocitySet, time: f64) -> Self {
        Self {
            dim: vs.dim(),
            scale: config.lattice().n(),
            velocities: velocity_pairs(vs),
            time,
            data: SnapshotData::Occupancy {
                words: config.words().to_vec(),
            },
        }
    }

    pub fn from_fields(vs: &VelocitySet, m: usize, time: f64, values: Vec<f64>) -> Self {
        Self {
            dim: vs.dim(),
            scale: m,
            velocities: velocity_pairs(vs),
            time,
            data: SnapshotData::Fields { values },
        }
    }

    pub fn velocity_set(&self) -> Result<VelocitySet> {
        let vels = self
            .velocities
            .iter()
            .map(|v| Velocity::from_ratios(v))
            .collect::<Result<Vec<_>>>()?;
        VelocitySet::new(vels)
    }

    pub fn to_configuration(&self) -> Result<Configuration> {
        let SnapshotData::Occupancy { words } = &self.data else {
            return Err(Error::Snapshot("snapshot holds fields, not occupancies".into()));
        };
        let lat = Lattice::new(self.scale, self.dim)?;
        Configuration::from_words(lat, self.velocities.len(), words.clone())
            .map_err(|e| Error::Snapshot(e.to_string()))
    }

    pub fn write_binary<W: Write>(&self, mut w: W) -> Result<()> {
        let n_vel = self.velocities.len();
        let kind: u8 = match self.data {
            SnapshotData::Occupancy { .. } => 0,
            SnapshotData::Fields { .. } => 1,
        };
        w.write_all(MAGIC)?;
        w.write_all(&[VERSION, kind])?;
        w.write_all(&(self.dim as u16).to_le_bytes())?;
        w.write_all(&(self.scale as u32).to_le_bytes())?;
        w.write_all(&(n_vel as u32).to_le_bytes())?;
        for v in &self.velocities {
            if v.len() != self.dim {
                return Err(Error::Snapshot("velocity dimension mismatch".into()));
            }
            for &(n, d) in v {
                w.write_all(&n.to_le_bytes())?;
                w.write_all(&d.to_le_bytes())?;
            }
        }
        w.write_all(&self.time.to_le_bytes())?;
        let payload = match &self.data {
            SnapshotData::Occupancy { words } => {
                let bits = words.len() * n_vel;
                let mut bytes = vec![0u8; bits.div_ceil(8)];
                for (s, &word) in words.iter().enumerate() {
                    for v in 0..n_vel {
                        if word >> v & 1 == 1 {
                            let i = s * n_vel + v;
                            bytes[i / 8] |= 1 << (i % 8);
                        }
                    }
                }
                bytes
            }
            SnapshotData::Fields { values } => {
                values.iter().flat_map(|x| x.to_le_bytes()).collect()
            }
        };
        w.write_all(&(payload.len() as u64).to_le_bytes())?;
        w.write_all(&payload)?;
        Ok(())
    }

    pub fn read_binary<R: Read>(mut r: R) -> Result<Self> {
        fn take<R: Read, const K: usize>(r: &mut R) -> Result<[u8; K]> {
            let mut b = [0u8; K];
            r.read_exact(&mut b)
                .map_err(|e| Error::Snapshot(format!("truncated header: {e}")))?;
            Ok(b)
        }
        if &take::<_, 4>(&mut r)? != MAGIC {
            return Err(Error::Snapshot("bad magic".into()));
        }
        let [version, kind] = take::<_, 2>(&mut r)?;
        if version != VERSION {
            return Err(Error::Snapshot(format!("unsupported version {version}")));
        }
        let dim = u16::from_le_bytes(take(&mut r)?) as usize;
        let scale = u32::from_le_bytes(take(&mut r)?) as usize;
        let n_vel = u32::from_le_bytes(take(&mut r)?) as usize;
        if dim == 0 || n_vel == 0 || n_vel > 64 {
            return Err(Error::Snapshot(format!("bad header: d = {dim}, |V| = {n_vel}")));
        }
        let mut velocities = Vec::with_capacity(n_vel);
        for _ in 0..n_vel {
            let mut v = Vec::with_capacity(dim);
            for _ in 0..dim {
                let n = i64::from_le_bytes(take(&mut r)?);
                let d = i64::from_le_bytes(take(&mut r)?);
                if d == 0 {
                    return Err(Error::Snapshot("zero denominator".into()));
                }
                let q = Rational64::new(n, d);
                v.push((*q.numer(), *q.denom()));
            }
            velocities.push(v);
        }
        let time = f64::from_le_bytes(take(&mut r)?);
        let len = u64::from_le_bytes(take(&mut r)?) as usize;
        let mut payload = vec![0u8; len];
        r.read_exact(&mut payload)
            .map_err(|e| Error::Snapshot(format!("truncated payload: {e}")))?;
        let data = match kind {
            0 => {
                let lat = Lattice::new(scale, dim).map_err(|e| Error::Snapshot(e.to_string()))?;
                let sites = lat.n_sites();
                if len != (sites * n_vel).div_ceil(8) {
                    return Err(Error::Snapshot(format!(
                        "payload has {len} bytes, expected {}",
                        (sites * n_vel).div_ceil(8)
                    )));
                }
                let words = (0..sites)
                    .map(|s| {
                        (0..n_vel).fold(0u64, |w, v| {
                            let i = s * n_vel + v;
                            w | (((payload[i / 8] >> (i % 8)) & 1) as u64) << v
                        })
                    })
                    .collect();
                SnapshotData::Occupancy { words }
            }
            1 => {
                if len % 8 != 0 {
                    return Err(Error::Snapshot("field payload not a multiple of 8".into()));
                }
                let values = payload
                    .chunks_exact(8)
                    .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
                    .collect();
                SnapshotData::Fields { values }
            }
            k => return Err(Error::Snapshot(format!("unknown payload kind {k}"))),
        };
        Ok(Self {
            dim,
            scale,
            velocities,
            time,
            data,
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measures::sample_from_thetas;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn header_layout_is_stable() {
        let vs = VelocitySet::default_for_dim(1).unwrap();
        let lat = Lattice::new(3, 1).unwrap();
        let c = Configuration::from_words(lat, 2, vec![0b01, 0b10]).unwrap();
        let snap = Snapshot::from_configuration(&c, &vs, 0.5);
        let mut buf = Vec::new();
        snap.write_binary(&mut buf).unwrap();
        assert_eq!(&buf[..4], b"HLSN");
        assert_eq!(buf[4], 1);
        assert_eq!(buf[5], 0);
        assert_eq!(u16::from_le_bytes([buf[6], buf[7]]), 1);
        assert_eq!(u32::from_le_bytes(buf[8..12].try_into().unwrap()), 3);
        assert_eq!(u32::from_le_bytes(buf[12..16].try_into().unwrap()), 2);
        let body = 16 + 2 * 16;
        assert_eq!(f64::from_le_bytes(buf[body..body + 8].try_into().unwrap()), 0.5);
        assert_eq!(u64::from_le_bytes(buf[body + 8..body + 16].try_into().unwrap()), 1);
        // bits: site0 v0, site1 v1 -> positions 0 and 3
        assert_eq!(buf[body + 16], 0b1001);
        assert_eq!(buf.len(), body + 17);
    }

    #[test]
    fn fields_roundtrip() {
        let vs = VelocitySet::default_for_dim(2).unwrap();
        let snap = Snapshot::from_fields(&vs, 4, 0.25, vec![1.0, -2.5, 3.25, f64::MIN_POSITIVE]);
        let mut buf = Vec::new();
        snap.write_binary(&mut buf).unwrap();
        assert_eq!(Snapshot::read_binary(buf.as_slice()).unwrap(), snap);
        assert_eq!(Snapshot::from_json(&snap.to_json().unwrap()).unwrap(), snap);
    }

    #[test]
    fn corrupt_input_is_rejected() {
        assert!(Snapshot::read_binary(&b"XXXX"[..]).is_err());
        let vs = VelocitySet::default_for_dim(1).unwrap();
        let c = Configuration::empty(Lattice::new(5, 1).unwrap(), 2);
        let mut buf = Vec::new();
        Snapshot::from_configuration(&c, &vs, 0.0).write_binary(&mut buf).unwrap();
        buf.pop();
        assert!(Snapshot::read_binary(buf.as_slice()).is_err());
    }

    proptest! {
        #[test]
        fn occupancy_roundtrips(n in 2usize..9, d in 1usize..3, seed: u64, t in 0.0f64..10.0) {
            let vs = VelocitySet::default_for_dim(d).unwrap();
            let lat = Lattice::new(n, d).unwrap();
            let th = vec![vec![0.4; vs.len()]; lat.n_sites()];
            let c = sample_from_thetas(lat, &th, &mut ChaCha8Rng::seed_from_u64(seed));
            let snap = Snapshot::from_configuration(&c, &vs, t);
            let mut buf = Vec::new();
            snap.write_binary(&mut buf).unwrap();
            let back = Snapshot::read_binary(buf.as_slice()).unwrap();
            prop_assert_eq!(&back, &snap);
            prop_assert_eq!(back.to_configuration().unwrap(), c);
            let back_vs = back.velocity_set().unwrap();
            prop_assert_eq!(back_vs.velocities(), vs.velocities());
            let json = Snapshot::from_json(&snap.to_json().unwrap()).unwrap();
            prop_assert_eq!(json, snap);
        }
    }
}
