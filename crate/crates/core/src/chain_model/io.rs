//! Plain-text chain format.
//!
//! ```text
//! # chainlab chain v1
//! n <n>
//! law <json mass law>
//! seed <u64>
//! <mass_1>
//! ...
//! <mass_n>
//! ```
//! Masses are written with 17 significant digits, which round-trips `f64`.

use super::{DisorderedChain, MassLaw};
use crate::error::{ChainError, Result};
use std::io::{BufRead, Write};

const MAGIC: &str = "# chainlab chain v1";

pub fn write_chain<W: Write>(chain: &DisorderedChain, mut w: W) -> Result<()> {
    writeln!(w, "{MAGIC}")?;
    writeln!(w, "n {}", chain.n)?;
    let law = serde_json::to_string(&chain.mass_law).map_err(|e| ChainError::Format(e.to_string()))?;
    writeln!(w, "law {law}")?;
    writeln!(w, "seed {}", chain.seed)?;
    for m in &chain.masses {
        writeln!(w, "{m:.16e}")?;
    }
    Ok(())
}

fn field<'a>(line: Option<std::io::Result<String>>, key: &str, buf: &'a mut String) -> Result<&'a str> {
    *buf = line.ok_or_else(|| ChainError::Format(format!("missing '{key}' line")))??;
    buf.strip_prefix(key)
        .map(str::trim)
        .ok_or_else(|| ChainError::Format(format!("expected '{key}', found '{buf}'")))
}

pub fn read_chain<R: BufRead>(r: R) -> Result<DisorderedChain> {
    let mut lines = r.lines();
    let magic = lines.next().ok_or_else(|| ChainError::Format("empty input".into()))??;
    if magic.trim() != MAGIC {
        return Err(ChainError::Format(format!("bad header '{magic}'")));
    }
    let mut buf = String::new();
    let n: usize = field(lines.next(), "n ", &mut buf)?
        .parse()
        .map_err(|e| ChainError::Format(format!("n: {e}")))?;
    let mass_law: MassLaw = serde_json::from_str(field(lines.next(), "law ", &mut buf)?)
        .map_err(|e| ChainError::Format(format!("law: {e}")))?;
    let seed: u64 = field(lines.next(), "seed ", &mut buf)?
        .parse()
        .map_err(|e| ChainError::Format(format!("seed: {e}")))?;
    let mut masses = Vec::with_capacity(n);
    for line in lines {
        let line = line?;
        let t = line.trim();
        if t.is_empty() {
            continue;
        }
        masses.push(t.parse::<f64>().map_err(|e| ChainError::Format(format!("mass: {e}")))?);
    }
    if masses.len() != n {
        return Err(ChainError::DimensionMismatch {
            what: "mass count",
            expected: n,
            got: masses.len(),
        });
    }
    mass_law.validate()?;
    let (lo, hi) = mass_law.support();
    if masses.iter().any(|m| !(lo..=hi).contains(m)) {
        return Err(ChainError::Format("mass outside the law support".into()));
    }
    Ok(DisorderedChain {
        n,
        masses,
        mean_mass: mass_law.mean(),
        seed,
        mass_law,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain_model::sample_masses;

    #[test]
    fn round_trip_is_bit_exact() {
        let c = sample_masses(97, MassLaw::default(), 12345).unwrap();
        let mut buf = Vec::new();
        write_chain(&c, &mut buf).unwrap();
        let back = read_chain(&buf[..]).unwrap();
        assert_eq!(c, back);
    }

    #[test]
    fn rejects_truncated_input() {
        let c = sample_masses(5, MassLaw::default(), 1).unwrap();
        let mut buf = Vec::new();
        write_chain(&c, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let cut: String = text.lines().take(7).map(|l| format!("{l}\n")).collect();
        assert!(read_chain(cut.as_bytes()).is_err());
        assert!(read_chain("garbage\n".as_bytes()).is_err());
    }
}
