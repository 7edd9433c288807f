//! Binary model files.
//!
//! ```text
//! magic "BLGM" | version u32 | config | feature names | base_score f64
//! best_iteration u64 | iterations_trained u64 | degenerate u8
//! valid_rmse (u64 count, f64s) | tree count u64 | trees
//! ```
//!
//! A tree is a u32 node count followed by nodes: tag 0 + leaf value, or tag
//! 1 + feature u32, threshold f64, left u32, right u32, gain f64. Integers
//! and floats are little-endian; strings are u32 length + UTF-8.

use std::io::{Read, Write};

use super::{BoostedModel, LearnError, Node, TrainConfig, Tree};

const MAGIC: &[u8; 4] = b"BLGM";
const VERSION: u32 = 1;

struct Out<W: Write>(W);

impl<W: Write> Out<W> {
    fn bytes(&mut self, b: &[u8]) -> std::io::Result<()> {
        self.0.write_all(b)
    }
    fn u32(&mut self, x: u32) -> std::io::Result<()> {
        self.bytes(&x.to_le_bytes())
    }
    fn u64(&mut self, x: u64) -> std::io::Result<()> {
        self.bytes(&x.to_le_bytes())
    }
    fn f64(&mut self, x: f64) -> std::io::Result<()> {
        self.bytes(&x.to_le_bytes())
    }
    fn str(&mut self, s: &str) -> std::io::Result<()> {
        self.u32(s.len() as u32)?;
        self.bytes(s.as_bytes())
    }
}

struct In<R: Read>(R);

impl<R: Read> In<R> {
    fn array<const N: usize>(&mut self) -> Result<[u8; N], LearnError> {
        let mut b = [0u8; N];
        self.0.read_exact(&mut b).map_err(|_| LearnError::Malformed("truncated".into()))?;
        Ok(b)
    }
    fn u8(&mut self) -> Result<u8, LearnError> {
        Ok(self.array::<1>()?[0])
    }
    fn u32(&mut self) -> Result<u32, LearnError> {
        Ok(u32::from_le_bytes(self.array()?))
    }
    fn u64(&mut self) -> Result<u64, LearnError> {
        Ok(u64::from_le_bytes(self.array()?))
    }
    fn f64(&mut self) -> Result<f64, LearnError> {
        Ok(f64::from_le_bytes(self.array()?))
    }
    fn str(&mut self) -> Result<String, LearnError> {
        let len = self.u32()? as usize;
        let mut b = vec![0u8; len];
        self.0.read_exact(&mut b).map_err(|_| LearnError::Malformed("truncated".into()))?;
        String::from_utf8(b).map_err(|_| LearnError::Malformed("non-UTF-8 string".into()))
    }
}

pub fn write_model<W: Write>(w: W, m: &BoostedModel) -> Result<(), LearnError> {
    let mut o = Out(w);
    o.bytes(MAGIC)?;
    o.u32(VERSION)?;
    let c = &m.config;
    o.f64(c.learning_rate)?;
    o.u64(c.n_estimators as u64)?;
    o.u64(c.num_leaves as u64)?;
    o.f64(c.feature_fraction)?;
    o.u64(c.early_stopping_rounds as u64)?;
    o.f64(c.lambda)?;
    o.f64(c.min_weight_in_leaf)?;
    o.f64(c.min_sum_hessian_in_leaf)?;
    o.u64(c.max_depth.map_or(0, |d| d as u64 + 1))?;
    o.u64(c.seed)?;
    o.u32(m.feature_names.len() as u32)?;
    for n in &m.feature_names {
        o.str(n)?;
    }
    o.f64(m.base_score)?;
    o.u64(m.best_iteration as u64)?;
    o.u64(m.iterations_trained as u64)?;
    o.bytes(&[m.degenerate as u8])?;
    o.u64(m.valid_rmse.len() as u64)?;
    for e in &m.valid_rmse {
        o.f64(*e)?;
    }
    o.u64(m.trees.len() as u64)?;
    for t in &m.trees {
        o.u32(t.nodes.len() as u32)?;
        for n in &t.nodes {
            match n {
                Node::Leaf { value } => {
                    o.bytes(&[0])?;
                    o.f64(*value)?;
                }
                Node::Split { feature, threshold, left, right, gain } => {
                    o.bytes(&[1])?;
                    o.u32(*feature as u32)?;
                    o.f64(*threshold)?;
                    o.u32(*left as u32)?;
                    o.u32(*right as u32)?;
                    o.f64(*gain)?;
                }
            }
        }
    }
    o.0.flush()?;
    Ok(())
}

pub fn read_model<R: Read>(r: R) -> Result<BoostedModel, LearnError> {
    let mut i = In(r);
    if &i.array::<4>()? != MAGIC {
        return Err(LearnError::Malformed("bad magic".into()));
    }
    let version = i.u32()?;
    if version != VERSION {
        return Err(LearnError::Malformed(format!("unsupported version {version}")));
    }
    let config = TrainConfig {
        learning_rate: i.f64()?,
        n_estimators: i.u64()? as usize,
        num_leaves: i.u64()? as usize,
        feature_fraction: i.f64()?,
        early_stopping_rounds: i.u64()? as usize,
        lambda: i.f64()?,
        min_weight_in_leaf: i.f64()?,
        min_sum_hessian_in_leaf: i.f64()?,
        max_depth: match i.u64()? {
            0 => None,
            d => Some(d as usize - 1),
        },
        seed: i.u64()?,
    };
    let n_features = i.u32()? as usize;
    let feature_names = (0..n_features).map(|_| i.str()).collect::<Result<Vec<_>, _>>()?;
    let base_score = i.f64()?;
    let best_iteration = i.u64()? as usize;
    let iterations_trained = i.u64()? as usize;
    let degenerate = i.u8()? != 0;
    let n_rmse = i.u64()?;
    let valid_rmse = (0..n_rmse).map(|_| i.f64()).collect::<Result<Vec<_>, _>>()?;
    let n_trees = i.u64()?;
    let mut trees = Vec::new();
    for _ in 0..n_trees {
        let n_nodes = i.u32()? as usize;
        let mut nodes = Vec::with_capacity(n_nodes);
        for _ in 0..n_nodes {
            nodes.push(match i.u8()? {
                0 => Node::Leaf { value: i.f64()? },
                1 => Node::Split {
                    feature: i.u32()? as usize,
                    threshold: i.f64()?,
                    left: i.u32()? as usize,
                    right: i.u32()? as usize,
                    gain: i.f64()?,
                },
                t => return Err(LearnError::Malformed(format!("node tag {t}"))),
            });
        }
        for (k, n) in nodes.iter().enumerate() {
            if let Node::Split { feature, left, right, .. } = n {
                let child_ok = |c: usize| c > k && c < n_nodes;
                if *feature >= n_features || !child_ok(*left) || !child_ok(*right) {
                    return Err(LearnError::Malformed("node index out of range".into()));
                }
            }
        }
        trees.push(Tree { nodes });
    }
    if trees.len() != best_iteration {
        return Err(LearnError::Malformed("tree count differs from best_iteration".into()));
    }
    Ok(BoostedModel {
        config,
        feature_names,
        base_score,
        trees,
        best_iteration,
        iterations_trained,
        valid_rmse,
        degenerate,
    })
}
