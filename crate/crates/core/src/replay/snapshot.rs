//! Flat binary dump of a ring buffer.
//!
//! Layout, all little-endian: four `u64` header words `capacity, state_dim,
//! action_dim, size`, then `size` records from oldest to newest, each
//! `state, action, reward, next_state, terminal, truncated` as `f64`.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::replay::{RingBuffer, Transition};

pub fn save_snapshot(buffer: &RingBuffer, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let mut write = |bytes: &[u8]| w.write_all(bytes).map_err(|e| Error::io(path, e));
    for word in [
        buffer.capacity(),
        buffer.state_dim(),
        buffer.action_dim(),
        buffer.len(),
    ] {
        write(&(word as u64).to_le_bytes())?;
    }
    for slot in buffer.slots_by_age() {
        let t = buffer.get(slot).expect("occupied slot");
        let flags = [
            f64::from(u8::from(t.terminal)),
            f64::from(u8::from(t.truncated)),
        ];
        for v in t
            .state
            .iter()
            .chain(&t.action)
            .chain(std::iter::once(&t.reward))
            .chain(&t.next_state)
            .chain(&flags)
        {
            write(&v.to_le_bytes())?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn load_snapshot(path: &Path) -> Result<RingBuffer> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = BufReader::new(file);
    let mut word = [0u8; 8];
    let mut read_word = |r: &mut BufReader<File>| -> Result<[u8; 8]> {
        r.read_exact(&mut word).map_err(|e| Error::io(path, e))?;
        Ok(word)
    };
    let mut header = [0usize; 4];
    for h in &mut header {
        *h = usize::try_from(u64::from_le_bytes(read_word(&mut r)?))
            .map_err(|_| Error::Format("header word overflows usize".into()))?;
    }
    let [capacity, n, m, size] = header;
    if size > capacity {
        return Err(Error::Format(format!(
            "snapshot size {size} exceeds capacity {capacity}"
        )));
    }
    let mut buffer = RingBuffer::new(capacity, n, m)?;
    let record = 2 * n + m + 3;
    let mut values = vec![0.0; record];
    for _ in 0..size {
        for v in &mut values {
            *v = f64::from_le_bytes(read_word(&mut r)?);
        }
        let flag = |v: f64| -> Result<bool> {
            match v {
                0.0 => Ok(false),
                1.0 => Ok(true),
                other => Err(Error::Format(format!("flag value {other}"))),
            }
        };
        buffer.push(&Transition {
            state: values[..n].to_vec(),
            action: values[n..n + m].to_vec(),
            reward: values[n + m],
            next_state: values[n + m + 1..2 * n + m + 1].to_vec(),
            terminal: flag(values[2 * n + m + 1])?,
            truncated: flag(values[2 * n + m + 2])?,
        })?;
    }
    Ok(buffer)
}
