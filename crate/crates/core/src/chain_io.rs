//! Chain CSV: one row per iteration, lossless for every field of a draw.

use std::io::{Read, Write};

use nalgebra::{DMatrix, DVector};

use crate::data::{bitmask, parse_bitmask, Family, ModelPair};
use crate::error::{Error, Result};
use crate::sampler::{Chain, Draw, MhDiagnostics};
use crate::scalar::Real;

pub fn header(l: usize, p: usize) -> Vec<String> {
    let d = l + 1;
    let mut h = vec!["iteration".to_string(), "warmup".into(), "alpha".into()];
    h.extend((1..=l).map(|j| format!("tau_{j}")));
    h.extend((1..=p).map(|k| format!("beta_{k}")));
    h.extend((1..=l).map(|j| format!("gamma_{j}")));
    for k in 1..=p {
        h.extend((1..=l).map(|j| format!("delta_{k}_{j}")));
    }
    for i in 0..d {
        h.extend((i..d).map(|j| format!("sigma_{i}_{j}")));
    }
    h.extend(["g_l", "g_m", "nu", "r_y"].map(String::from));
    h.extend((1..=l).map(|j| format!("r_x_{j}")));
    h.extend(["model_l", "model_m"].map(String::from));
    h.extend((1..=l).map(|j| format!("tau_cond_mean_{j}")));
    h.extend((1..=l).map(|j| format!("tau_cond_sd_{j}")));
    h
}

fn num<T: Real>(v: T) -> String {
    v.f64().to_string()
}

fn opt<T: Real>(v: Option<T>) -> String {
    v.map(num).unwrap_or_default()
}

pub fn write_chain<T: Real, W: Write>(chain: &Chain<T>, out: W) -> Result<()> {
    let (l, p) = (chain.l, chain.p);
    let mut w = csv::Writer::from_writer(out);
    w.write_record(header(l, p))?;
    for (it, d) in chain.draws.iter().enumerate() {
        let mut rec = vec![it.to_string(), u8::from(it < chain.burn_in).to_string(), num(d.alpha)];
        rec.extend(d.tau.iter().map(|&v| num(v)));
        rec.extend(d.beta.iter().map(|&v| num(v)));
        rec.extend(d.gamma.iter().map(|&v| num(v)));
        for k in 0..p {
            rec.extend((0..l).map(|j| num(d.delta[(k, j)])));
        }
        for i in 0..=l {
            rec.extend((i..=l).map(|j| num(d.sigma[(i, j)])));
        }
        rec.extend([num(d.g_l), num(d.g_m), num(d.nu), opt(d.r_y)]);
        rec.extend(d.r_x.iter().map(|&r| opt(r)));
        rec.push(bitmask(&d.models.outcome));
        rec.push(bitmask(&d.models.treatment));
        rec.extend(d.tau_cond_mean.iter().map(|&v| num(v)));
        rec.extend(d.tau_cond_sd.iter().map(|&v| num(v)));
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::Schema(format!("cannot write chain: {e}")))
}

pub fn write_chain_file<T: Real>(chain: &Chain<T>, path: &std::path::Path) -> Result<()> {
    let f = std::fs::File::create(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    write_chain(chain, std::io::BufWriter::new(f))
}

/// Count (l, p) from a chain header.
fn dims(h: &csv::StringRecord) -> Result<(usize, usize)> {
    let l = h.iter().filter(|c| c.starts_with("tau_") && !c.starts_with("tau_cond")).count();
    let p = h.iter().filter(|c| c.starts_with("beta_")).count();
    let expect = header(l, p);
    if h.iter().ne(expect.iter().map(String::as_str)) {
        return Err(Error::Schema("chain header does not match the expected layout".into()));
    }
    Ok((l, p))
}

/// Read a chain written by [`write_chain`]. Families are not stored in the CSV
/// and come from the data schema.
pub fn read_chain<T: Real, R: Read>(input: R, y_family: Family, x_families: Vec<Family>) -> Result<Chain<T>> {
    let mut r = csv::Reader::from_reader(input);
    let (l, p) = dims(r.headers()?)?;
    if x_families.len() != l {
        return Err(Error::Schema(format!("chain has {l} treatments, schema has {}", x_families.len())));
    }
    let mut draws = Vec::new();
    let mut burn_in = 0;
    for (row, rec) in r.records().enumerate() {
        let rec = rec?;
        let mut it = rec.iter();
        let mut next = || it.next().ok_or_else(|| Error::Schema(format!("short chain row {row}")));
        let parse = |s: &str| -> Result<T> {
            s.parse::<f64>()
                .map(T::lit)
                .map_err(|_| Error::Schema(format!("bad number `{s}` in chain row {row}")))
        };
        let parse_opt = |s: &str| -> Result<Option<T>> { if s.is_empty() { Ok(None) } else { parse(s).map(Some) } };
        next()?;
        if next()? == "1" {
            if burn_in != row {
                return Err(Error::Schema("warmup rows must precede retained rows".into()));
            }
            burn_in += 1;
        }
        let alpha = parse(next()?)?;
        let mut vec_of = |k: usize| -> Result<DVector<T>> {
            let v = (0..k).map(|_| next().and_then(parse)).collect::<Result<Vec<T>>>()?;
            Ok(DVector::from_vec(v))
        };
        let tau = vec_of(l)?;
        let beta = vec_of(p)?;
        let gamma = vec_of(l)?;
        let delta_rows = vec_of(p * l)?;
        let delta = DMatrix::from_row_slice(p, l, delta_rows.as_slice());
        let mut sigma = DMatrix::zeros(l + 1, l + 1);
        for i in 0..=l {
            for j in i..=l {
                let v = parse(next()?)?;
                sigma[(i, j)] = v;
                sigma[(j, i)] = v;
            }
        }
        let g_l = parse(next()?)?;
        let g_m = parse(next()?)?;
        let nu = parse(next()?)?;
        let r_y = parse_opt(next()?)?;
        let r_x = (0..l).map(|_| next().and_then(parse_opt)).collect::<Result<Vec<_>>>()?;
        let models = ModelPair {
            outcome: parse_bitmask(next()?)?,
            treatment: parse_bitmask(next()?)?,
        };
        if models.outcome.len() != p || models.treatment.len() != p {
            return Err(Error::Schema(format!("inclusion mask length in chain row {row}")));
        }
        let mut vec_of = |k: usize| -> Result<DVector<T>> {
            let v = (0..k).map(|_| next().and_then(parse)).collect::<Result<Vec<T>>>()?;
            Ok(DVector::from_vec(v))
        };
        let tau_cond_mean = vec_of(l)?;
        let tau_cond_sd = vec_of(l)?;
        draws.push(Draw {
            alpha,
            tau,
            beta,
            gamma,
            delta,
            sigma,
            g_l,
            g_m,
            nu,
            r_y,
            r_x,
            models,
            tau_cond_mean,
            tau_cond_sd,
        });
    }
    Ok(Chain {
        draws,
        burn_in,
        seed: 0,
        stream: 0,
        diagnostics: MhDiagnostics::default(),
        l,
        p,
        y_family,
        x_families,
    })
}

pub fn read_chain_file<T: Real>(path: &std::path::Path, y_family: Family, x_families: Vec<Family>) -> Result<Chain<T>> {
    let f = std::fs::File::open(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    read_chain(std::io::BufReader::new(f), y_family, x_families)
}
