//! Binary checkpoint of all six networks and both optimizers.
//!
//! Little-endian throughout: magic `DPERCKPT`, `u32` version, the action
//! bound and update counters, then each network (activation tag, widths,
//! tensors) and each Adam state (step, hyperparameters, moments).

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::nn::{AdamConfig, AdamState, Dense, Matrix, MlpParams, OutputActivation};
use crate::td3::AgentNets;

const MAGIC: &[u8; 8] = b"DPERCKPT";
const VERSION: u32 = 1;

struct Writer<W: Write>(W);

impl<W: Write> Writer<W> {
    fn bytes(&mut self, b: &[u8]) -> std::io::Result<()> {
        self.0.write_all(b)
    }
    fn u64(&mut self, v: u64) -> std::io::Result<()> {
        self.bytes(&v.to_le_bytes())
    }
    fn f64(&mut self, v: f64) -> std::io::Result<()> {
        self.bytes(&v.to_le_bytes())
    }
    fn floats(&mut self, vs: &[f64]) -> std::io::Result<()> {
        vs.iter().try_for_each(|&v| self.f64(v))
    }

    fn net(&mut self, net: &MlpParams) -> std::io::Result<()> {
        match net.output_activation() {
            OutputActivation::Identity => {
                self.u64(0)?;
                self.f64(0.0)?;
            }
            OutputActivation::Tanh { bound } => {
                self.u64(1)?;
                self.f64(bound)?;
            }
        }
        self.u64(net.input_dim() as u64)?;
        self.u64(net.hidden_dim() as u64)?;
        self.u64(net.output_dim() as u64)?;
        net.tensors().iter().try_for_each(|t| self.floats(t))
    }

    fn adam(&mut self, s: &AdamState) -> std::io::Result<()> {
        self.u64(s.t)?;
        let c = s.config;
        self.floats(&[c.lr, c.beta1, c.beta2, c.eps])?;
        for moments in [&s.first, &s.second] {
            for net in moments {
                for t in net {
                    self.floats(t)?;
                }
            }
        }
        Ok(())
    }
}

struct Reader<R: Read>(R);

impl<R: Read> Reader<R> {
    fn bytes<const N: usize>(&mut self) -> std::io::Result<[u8; N]> {
        let mut b = [0u8; N];
        self.0.read_exact(&mut b)?;
        Ok(b)
    }
    fn u64(&mut self) -> std::io::Result<u64> {
        Ok(u64::from_le_bytes(self.bytes()?))
    }
    fn f64(&mut self) -> std::io::Result<f64> {
        Ok(f64::from_le_bytes(self.bytes()?))
    }
    fn floats(&mut self, n: usize) -> std::io::Result<Vec<f64>> {
        (0..n).map(|_| self.f64()).collect()
    }
}

pub fn save_checkpoint(nets: &AgentNets, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = Writer(BufWriter::new(file));
    let io = |e| Error::io(path, e);
    w.bytes(MAGIC).map_err(io)?;
    w.bytes(&VERSION.to_le_bytes()).map_err(io)?;
    w.f64(nets.action_bound).map_err(io)?;
    w.u64(nets.critic_updates as u64).map_err(io)?;
    w.u64(nets.actor_updates as u64).map_err(io)?;
    for net in [
        &nets.actor,
        &nets.critic1,
        &nets.critic2,
        &nets.actor_target,
        &nets.critic1_target,
        &nets.critic2_target,
    ] {
        w.net(net).map_err(io)?;
    }
    w.adam(&nets.actor_opt).map_err(io)?;
    w.adam(&nets.critic_opt).map_err(io)?;
    w.0.flush().map_err(io)
}

fn read_net<R: Read>(r: &mut Reader<R>) -> Result<MlpParams> {
    let io = |e| Error::Format(format!("network record: {e}"));
    let tag = r.u64().map_err(io)?;
    let bound = r.f64().map_err(io)?;
    let activation = match tag {
        0 => OutputActivation::Identity,
        1 => OutputActivation::Tanh { bound },
        other => return Err(Error::Format(format!("unknown activation tag {other}"))),
    };
    let dims = [
        r.u64().map_err(io)?,
        r.u64().map_err(io)?,
        r.u64().map_err(io)?,
    ];
    let [input, hidden, output] = dims.map(|d| d as usize);
    if [input, hidden, output]
        .iter()
        .any(|&d| d == 0 || d > 1 << 20)
    {
        return Err(Error::Format(format!("implausible widths {dims:?}")));
    }
    let mut layer = |fan_in: usize, fan_out: usize| -> Result<Dense> {
        let w = r.floats(fan_in * fan_out).map_err(io)?;
        let b = r.floats(fan_out).map_err(io)?;
        Ok(Dense {
            weight: Matrix::from_vec(fan_out, fan_in, w)?,
            bias: b,
        })
    };
    let l1 = layer(input, hidden)?;
    let l2 = layer(hidden, hidden)?;
    let l3 = layer(hidden, output)?;
    MlpParams::from_layers([l1, l2, l3], activation)
}

fn read_adam<R: Read>(r: &mut Reader<R>, nets: &[&MlpParams]) -> Result<AdamState> {
    let io = |e| Error::Format(format!("optimizer record: {e}"));
    let t = r.u64().map_err(io)?;
    let c = r.floats(4).map_err(io)?;
    let config = AdamConfig {
        lr: c[0],
        beta1: c[1],
        beta2: c[2],
        eps: c[3],
    };
    let mut state = AdamState::new(nets, config);
    state.t = t;
    for moments in [&mut state.first, &mut state.second] {
        for net in moments.iter_mut() {
            for tensor in net.iter_mut() {
                *tensor = r.floats(tensor.len()).map_err(io)?;
            }
        }
    }
    Ok(state)
}

pub fn load_checkpoint(path: &Path) -> Result<AgentNets> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = Reader(BufReader::new(file));
    let magic: [u8; 8] = r.bytes().map_err(|e| Error::io(path, e))?;
    if &magic != MAGIC {
        return Err(Error::Format("not a checkpoint file".into()));
    }
    let version = u32::from_le_bytes(r.bytes().map_err(|e| Error::io(path, e))?);
    if version != VERSION {
        return Err(Error::Format(format!(
            "checkpoint version {version}, expected {VERSION}"
        )));
    }
    let io = |e| Error::io(path, e);
    let action_bound = r.f64().map_err(io)?;
    let critic_updates = r.u64().map_err(io)? as usize;
    let actor_updates = r.u64().map_err(io)? as usize;
    let actor = read_net(&mut r)?;
    let critic1 = read_net(&mut r)?;
    let critic2 = read_net(&mut r)?;
    let actor_target = read_net(&mut r)?;
    let critic1_target = read_net(&mut r)?;
    let critic2_target = read_net(&mut r)?;
    let actor_opt = read_adam(&mut r, &[&actor])?;
    let critic_opt = read_adam(&mut r, &[&critic1, &critic2])?;
    Ok(AgentNets {
        actor,
        critic1,
        critic2,
        actor_target,
        critic1_target,
        critic2_target,
        actor_opt,
        critic_opt,
        action_bound,
        critic_updates,
        actor_updates,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Rng;
    use crate::td3::Td3Config;

    #[test]
    fn round_trip_preserves_everything() {
        let cfg = Td3Config {
            hidden: 6,
            ..Default::default()
        };
        let mut nets = AgentNets::new(3, 2, 1.5, &cfg, &mut Rng::new(4));
        nets.actor_opt.t = 7;
        nets.critic_opt.first[1][3][0] = 0.25;
        nets.critic_updates = 11;
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("agent.ckpt");
        save_checkpoint(&nets, &path).unwrap();
        let back = load_checkpoint(&path).unwrap();
        assert_eq!(back.actor, nets.actor);
        assert_eq!(back.critic2_target, nets.critic2_target);
        assert_eq!(back.actor_opt, nets.actor_opt);
        assert_eq!(back.critic_opt, nets.critic_opt);
        assert_eq!(back.action_bound, 1.5);
        assert_eq!(back.critic_updates, 11);
    }

    #[test]
    fn bad_magic_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("junk");
        std::fs::write(&path, b"NOTACKPTxxxx").unwrap();
        assert!(matches!(load_checkpoint(&path), Err(Error::Format(_))));
    }
}
