//! Market settings stored alongside networks in checkpoints.

use crate::market::{EconParams, SamplerConfig};
use crate::nn::checkpoint::{Checkpoint, CheckpointError};

pub fn write_market(ckpt: &mut Checkpoint, sampler: &SamplerConfig, params: &EconParams) {
    ckpt.meta.insert("market.n".into(), sampler.n.to_string());
    ckpt.vectors.insert(
        "market.theta_ranges".into(),
        sampler.theta_ranges.iter().flat_map(|&(a, b)| [a, b]).collect(),
    );
    ckpt.vectors
        .insert("market.l_max_range".into(), vec![sampler.l_max_range.0, sampler.l_max_range.1]);
    ckpt.vectors.insert("market.refs".into(), vec![sampler.n_ref, sampler.q_ref]);
    ckpt.vectors.insert(
        "econ".into(),
        vec![
            params.e1,
            params.e2,
            params.z1,
            params.z2,
            params.f,
            params.r_max,
            params.l_min_frac,
            params.violation_scale,
        ],
    );
}

pub fn read_market(ckpt: &Checkpoint) -> Result<(SamplerConfig, EconParams), CheckpointError> {
    let bad = |what: &str| CheckpointError::Missing(format!("well-formed {what}"));
    let n: u32 = ckpt.meta("market.n")?.trim().parse().map_err(|_| bad("market.n"))?;
    let ranges = ckpt.vector("market.theta_ranges")?;
    if ranges.is_empty() || ranges.len() % 2 != 0 {
        return Err(bad("market.theta_ranges"));
    }
    let theta_ranges = ranges.chunks(2).map(|c| (c[0], c[1])).collect();
    let l = ckpt.vector("market.l_max_range")?;
    let refs = ckpt.vector("market.refs")?;
    let e = ckpt.vector("econ")?;
    if l.len() != 2 || refs.len() != 2 || e.len() != 8 {
        return Err(bad("market vectors"));
    }
    let sampler = SamplerConfig {
        n,
        theta_ranges,
        l_max_range: (l[0], l[1]),
        n_ref: refs[0],
        q_ref: refs[1],
    };
    let params = EconParams {
        e1: e[0],
        e2: e[1],
        z1: e[2],
        z2: e[3],
        f: e[4],
        r_max: e[5],
        l_min_frac: e[6],
        violation_scale: e[7],
    };
    Ok((sampler, params))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn market_round_trip() {
        let sampler = SamplerConfig::paper();
        let params = EconParams::paper(sampler.theta_top());
        let mut c = Checkpoint::new();
        write_market(&mut c, &sampler, &params);
        let c = Checkpoint::parse(&c.to_text()).unwrap();
        assert_eq!(read_market(&c).unwrap(), (sampler, params));
    }
}
