//! Plain-text parameter checkpoints.
//!
//! ```text
//! convlstm-params v1
//! filters <F>
//! input_kernel <4F> 1 3 3
//! <values, whitespace separated>
//! hidden_kernel <4F> <F> 3 3
//! <values>
//! bias <4F>
//! <values>
//! readout <F>
//! <values>
//! readout_bias 1
//! <value>
//! ```
//!
//! Values are written in row-major order with shortest round-trip formatting.

use std::io::{BufRead, Write};

use super::ConvLstmParams;
use crate::error::{Error, Result};
use crate::scalar::Real;

const MAGIC: &str = "convlstm-params v1";
const NAMES: [&str; 5] = ["input_kernel", "hidden_kernel", "bias", "readout", "readout_bias"];

fn shapes(f: usize) -> [Vec<usize>; 5] {
    [vec![4 * f, 1, 3, 3], vec![4 * f, f, 3, 3], vec![4 * f], vec![f], vec![1]]
}

pub fn write_checkpoint<T: Real, W: Write>(params: &ConvLstmParams<T>, mut sink: W) -> Result<()> {
    params.check()?;
    writeln!(sink, "{MAGIC}")?;
    writeln!(sink, "filters {}", params.filters)?;
    for ((name, shape), values) in NAMES.iter().zip(shapes(params.filters)).zip(params.slices()) {
        let dims: Vec<String> = shape.iter().map(|d| d.to_string()).collect();
        writeln!(sink, "{name} {}", dims.join(" "))?;
        let vals: Vec<String> = values.iter().map(|v| v.to_string()).collect();
        writeln!(sink, "{}", vals.join(" "))?;
    }
    Ok(())
}

pub fn read_checkpoint<T: Real, R: BufRead>(source: R) -> Result<ConvLstmParams<T>> {
    let bad = |m: String| Error::Checkpoint(m);
    let mut lines = source.lines();
    let mut next = || -> Result<String> {
        lines.next().ok_or_else(|| bad("unexpected end of file".into()))?.map_err(Error::from)
    };
    if next()?.trim() != MAGIC {
        return Err(bad("missing `convlstm-params v1` header".into()));
    }
    let head = next()?;
    let filters: usize = head
        .strip_prefix("filters ")
        .and_then(|v| v.trim().parse().ok())
        .ok_or_else(|| bad(format!("bad filters line `{head}`")))?;
    let mut params = ConvLstmParams::<T>::zeros(filters);
    let expected = shapes(filters);
    for ((name, shape), dst) in NAMES.iter().zip(expected).zip(params.slices_mut()) {
        let header = next()?;
        let mut parts = header.split_whitespace();
        if parts.next() != Some(*name) {
            return Err(bad(format!("expected `{name}`, found `{header}`")));
        }
        let dims: Vec<usize> = parts.map(|d| d.parse().map_err(|_| bad(format!("bad dimension in `{header}`")))).collect::<Result<_>>()?;
        if dims != shape {
            return Err(bad(format!("{name}: shape {dims:?}, expected {shape:?}")));
        }
        let body = next()?;
        let vals: Vec<f64> = body
            .split_whitespace()
            .map(|v| v.parse::<f64>().map_err(|_| bad(format!("{name}: bad value `{v}`"))))
            .collect::<Result<_>>()?;
        if vals.len() != dst.len() {
            return Err(bad(format!("{name}: {} values, expected {}", vals.len(), dst.len())));
        }
        for (d, v) in dst.iter_mut().zip(vals) {
            *d = T::from_f64(v).ok_or_else(|| bad(format!("{name}: value out of range")))?;
        }
    }
    Ok(params)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_exact() {
        for seed in 0..3 {
            let p = ConvLstmParams::<f32>::init(3, seed);
            let mut buf = Vec::new();
            write_checkpoint(&p, &mut buf).unwrap();
            let q: ConvLstmParams<f32> = read_checkpoint(buf.as_slice()).unwrap();
            assert_eq!(p, q);
            let p = ConvLstmParams::<f64>::init(2, seed);
            let mut buf = Vec::new();
            write_checkpoint(&p, &mut buf).unwrap();
            assert_eq!(read_checkpoint::<f64, _>(buf.as_slice()).unwrap(), p);
        }
    }

    #[test]
    fn rejects_bad_input() {
        assert!(read_checkpoint::<f64, _>("nope\n".as_bytes()).is_err());
        let mut buf = Vec::new();
        write_checkpoint(&ConvLstmParams::<f64>::init(2, 0), &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap().replace("bias 8", "bias 7");
        assert!(matches!(read_checkpoint::<f64, _>(text.as_bytes()), Err(Error::Checkpoint(_))));
    }
}
