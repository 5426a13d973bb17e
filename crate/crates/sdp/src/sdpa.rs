//! Sparse SDPA text format.
//!
//! SDPA states the problem as `min c^T x s.t. sum_i F_i x_i - F_0 PSD`, so the
//! constant matrix is written with its sign flipped. Equalities are
//! eliminated before writing; the objective constant that elimination
//! produces is kept in a `* objective constant` comment line.

use std::fmt::Write as _;

use crate::instance::{LmiBlock, SdpInstance};
use crate::SdpError;

pub fn write_sdpa(inst: &SdpInstance, comment: &str) -> Result<String, SdpError> {
    let red = inst.reduce()?.to_instance();
    let mut out = String::new();
    for line in comment.lines() {
        let _ = writeln!(out, "* {line}");
    }
    let _ = writeln!(out, "* objective constant {:e}", red.objective_constant());
    let _ = writeln!(out, "{}", red.nvars());
    let _ = writeln!(out, "{}", red.blocks().len());
    let sizes: Vec<String> = red.blocks().iter().map(|b| b.size().to_string()).collect();
    let _ = writeln!(out, "{}", sizes.join(" "));
    let c: Vec<String> = red.objective().iter().map(|v| format!("{v:e}")).collect();
    let _ = writeln!(out, "{}", c.join(" "));
    for (bi, blk) in red.blocks().iter().enumerate() {
        for (i, j, v) in blk.constant().upper() {
            let _ = writeln!(out, "0 {} {} {} {:e}", bi + 1, i + 1, j + 1, -v);
        }
    }
    for k in 0..red.nvars() {
        for (bi, blk) in red.blocks().iter().enumerate() {
            if let Some(f) = blk.coeff(k) {
                for (i, j, v) in f.upper() {
                    let _ = writeln!(out, "{} {} {} {} {:e}", k + 1, bi + 1, i + 1, j + 1, v);
                }
            }
        }
    }
    Ok(out)
}

pub fn read_sdpa(text: &str) -> Result<SdpInstance, SdpError> {
    let mut constant = 0.0;
    let mut tokens: Vec<(usize, String)> = Vec::new();
    for (ln, line) in text.lines().enumerate() {
        let ln = ln + 1;
        let t = line.trim();
        if t.starts_with('*') || t.starts_with('"') {
            if let Some(rest) = t.trim_start_matches('*').trim().strip_prefix("objective constant") {
                constant = rest.trim().parse().map_err(|_| SdpError::Parse {
                    line: ln,
                    msg: format!("bad objective constant '{}'", rest.trim()),
                })?;
            }
            continue;
        }
        for tok in t.split(|c: char| c.is_whitespace() || "{}(),".contains(c)) {
            if !tok.is_empty() {
                tokens.push((ln, tok.to_string()));
            }
        }
    }
    let last_line = tokens.last().map_or(1, |t| t.0);
    let mut toks = tokens.into_iter().peekable();
    let next = |toks: &mut std::iter::Peekable<std::vec::IntoIter<(usize, String)>>, what: &str| {
        toks.next().ok_or_else(|| SdpError::Parse {
            line: last_line,
            msg: format!("unexpected end of input, expected {what}"),
        })
    };
    fn int(t: &(usize, String), what: &str) -> Result<i64, SdpError> {
        t.1.parse::<f64>()
            .ok()
            .filter(|v| v.fract() == 0.0)
            .map(|v| v as i64)
            .ok_or_else(|| SdpError::Parse {
                line: t.0,
                msg: format!("expected integer {what}, found '{}'", t.1),
            })
    }
    fn real(t: &(usize, String), what: &str) -> Result<f64, SdpError> {
        t.1.parse::<f64>().map_err(|_| SdpError::Parse {
            line: t.0,
            msg: format!("expected number {what}, found '{}'", t.1),
        })
    }
    let m = int(&next(&mut toks, "mDIM")?, "mDIM")?;
    let nb = int(&next(&mut toks, "nBLOCK")?, "nBLOCK")?;
    if m < 0 || nb < 0 {
        return Err(SdpError::Parse {
            line: 1,
            msg: "negative dimension".into(),
        });
    }
    let mut inst = SdpInstance::new(m as usize);
    inst.set_objective_constant(constant);
    let mut blocks = Vec::new();
    for _ in 0..nb {
        let t = next(&mut toks, "block size")?;
        let s = int(&t, "block size")?;
        if s == 0 {
            return Err(SdpError::Parse {
                line: t.0,
                msg: "zero block size".into(),
            });
        }
        blocks.push(LmiBlock::new(s.unsigned_abs() as usize));
    }
    for k in 0..m as usize {
        let t = next(&mut toks, "objective coefficient")?;
        inst.set_objective(k, real(&t, "objective coefficient")?);
    }
    while toks.peek().is_some() {
        let t0 = next(&mut toks, "matrix number")?;
        let mat = int(&t0, "matrix number")?;
        let blk = int(&next(&mut toks, "block number")?, "block number")?;
        let i = int(&next(&mut toks, "row")?, "row")?;
        let j = int(&next(&mut toks, "column")?, "column")?;
        let v = real(&next(&mut toks, "value")?, "value")?;
        if mat < 0 || mat > m || blk < 1 || blk > nb {
            return Err(SdpError::Parse {
                line: t0.0,
                msg: format!("entry refers to matrix {mat} block {blk}"),
            });
        }
        let b = &mut blocks[(blk - 1) as usize];
        let n = b.size() as i64;
        if i < 1 || j < 1 || i > n || j > n {
            return Err(SdpError::Parse {
                line: t0.0,
                msg: format!("index ({i}, {j}) outside block of size {n}"),
            });
        }
        let (i, j) = ((i - 1) as usize, (j - 1) as usize);
        if mat == 0 {
            b.add(None, i, j, -v);
        } else {
            b.add(Some((mat - 1) as usize), i, j, v);
        }
    }
    for b in blocks {
        inst.add_block(b);
    }
    Ok(inst)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_preserves_instance() {
        let mut inst = SdpInstance::new(2);
        inst.set_objective(0, 1.5);
        inst.set_objective(1, -2.0);
        inst.set_objective_constant(0.25);
        let mut b = LmiBlock::new(2);
        b.add(None, 0, 0, 1.0);
        b.add(Some(0), 0, 1, 0.5);
        b.add(Some(1), 1, 1, 3.0);
        inst.add_block(b);
        let mut b2 = LmiBlock::new(1);
        b2.add(Some(0), 0, 0, 1.0);
        inst.add_block(b2);
        let text = write_sdpa(&inst, "test").unwrap();
        let back = read_sdpa(&text).unwrap();
        assert_eq!(back, inst);
    }

    #[test]
    fn reads_punctuated_header() {
        let text = "\"example\n2 =mdim\n1\n{2}\n{1, 1}\n0 1 1 1 -1\n1 1 1 1 1\n2 1 2 2 1\n";
        let inst = read_sdpa(text.replace(" =mdim", "").as_str()).unwrap();
        assert_eq!(inst.nvars(), 2);
        assert_eq!(inst.blocks()[0].constant().get(0, 0), 1.0);
    }

    #[test]
    fn reports_line_of_bad_entry() {
        let text = "1\n1\n1\n1.0\n0 1 1 1 x\n";
        match read_sdpa(text) {
            Err(SdpError::Parse { line, .. }) => assert_eq!(line, 5),
            other => panic!("{other:?}"),
        }
        assert!(read_sdpa("1\n1\n1\n1.0\n1 2 1 1 1\n").is_err());
    }
}
