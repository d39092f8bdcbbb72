//! Versioned, sectioned, checksummed binary index files.
//!
//! Layout: 8-byte magic, format version (u32), section count (u32), a table
//! of `(tag[4], offset u64, length u64, crc32 u32)` entries, then the
//! payloads. All integers and floats are little-endian.

use std::fs;
use std::path::Path;

use super::codec::{Reader, Writer};
use crate::cluster::{ClusterModel, ClusterParams};
use crate::diffusion::DiffusionParams;
use crate::error::{Result, TsrError};
use crate::forest::{DecisionTree, ForestEnsemble, ForestGroup, ForestParams, Node};
use crate::globalfeat::{
    FeatureScaling, GeometricFeature, GlobalFeature, GlobalParams, RawGlobalFeature,
    SkeletonFeature, WaveletFeature, GLOBAL_DIM,
};
use crate::localfeat::{DistanceMatrix, LocalDescriptor, LocalParams};
use crate::pipeline::{BuildConfig, RetrievalIndex};
use crate::relevance::RelevanceTable;

pub const FORMAT_VERSION: u32 = 1;

const MAGIC: &[u8; 8] = b"TSRINDEX";
const ENTRY_LEN: usize = 4 + 8 + 8 + 4;

const SECTIONS: [&[u8; 4]; 9] = [
    b"CONF", b"SHAP", b"GRAW", b"GSCL", b"DESC", b"DIST", b"CLUS", b"FRST", b"RELV",
];

fn tag_name(tag: &[u8; 4]) -> String {
    String::from_utf8_lossy(tag).into_owned()
}

fn encode_config(w: &mut Writer, c: &BuildConfig) {
    w.usize(c.m);
    w.usize(c.raster);
    w.f64(c.global.min_branch_frac);
    w.f64(c.global.turn_angle_deg);
    w.usize(c.global.turn_arm);
    w.f64(c.global.smoothing_sigma);
    let l = &c.local;
    w.usize(l.n_samples);
    w.usize(l.n_dist);
    w.usize(l.n_angle);
    w.f64(l.skip_penalty);
    w.usize(l.shifts);
    w.f64(l.smoothing_sigma);
    w.usize(c.cluster.scale_neighbor);
    w.usize(c.cluster.restarts);
    w.usize(c.cluster.max_iter);
    w.usize(c.forest.trees);
    w.usize(c.forest.max_depth);
    w.usize(c.forest.min_leaf);
    w.usize(c.forest.groups.len());
    for g in &c.forest.groups {
        w.usizes(g);
    }
    match c.k {
        Some(k) => {
            w.u8(1);
            w.usize(k);
        }
        None => w.u8(0),
    }
    w.f64(c.epsilon);
    w.f64(c.floor);
    w.usize(c.diffusion.kernel_k);
    w.usize(c.diffusion.knn_w);
    w.usize(c.diffusion.iters);
    w.u64(c.seed);
}

fn decode_config(r: &mut Reader) -> Result<BuildConfig> {
    let m = r.usize()?;
    let raster = r.usize()?;
    let global = GlobalParams {
        min_branch_frac: r.f64()?,
        turn_angle_deg: r.f64()?,
        turn_arm: r.usize()?,
        smoothing_sigma: r.f64()?,
    };
    let local = LocalParams {
        n_samples: r.usize()?,
        n_dist: r.usize()?,
        n_angle: r.usize()?,
        skip_penalty: r.f64()?,
        shifts: r.usize()?,
        smoothing_sigma: r.f64()?,
    };
    let cluster = ClusterParams {
        scale_neighbor: r.usize()?,
        restarts: r.usize()?,
        max_iter: r.usize()?,
    };
    let (trees, max_depth, min_leaf) = (r.usize()?, r.usize()?, r.usize()?);
    let n_groups = r.len(8)?;
    let groups = (0..n_groups).map(|_| r.usizes()).collect::<Result<_>>()?;
    let k = match r.u8()? {
        0 => None,
        1 => Some(r.usize()?),
        _ => return Err(r.corrupt("bad option tag")),
    };
    Ok(BuildConfig {
        m,
        raster,
        global,
        local,
        cluster,
        forest: ForestParams {
            trees,
            max_depth,
            min_leaf,
            groups,
        },
        k,
        epsilon: r.f64()?,
        floor: r.f64()?,
        diffusion: DiffusionParams {
            kernel_k: r.usize()?,
            knn_w: r.usize()?,
            iters: r.usize()?,
        },
        seed: r.u64()?,
    })
}

fn encode_tree(w: &mut Writer, t: &DecisionTree) {
    w.usize(t.nodes.len());
    for n in &t.nodes {
        match *n {
            Node::Split {
                feature,
                threshold,
                left,
                right,
            } => {
                w.u8(0);
                w.usize(feature);
                w.f64(threshold);
                w.usize(left);
                w.usize(right);
            }
            Node::Leaf { class } => {
                w.u8(1);
                w.usize(class);
            }
        }
    }
}

fn decode_tree(r: &mut Reader, dim: usize, n_classes: usize) -> Result<DecisionTree> {
    let n = r.len(9)?;
    let mut nodes = Vec::with_capacity(n);
    for _ in 0..n {
        let node = match r.u8()? {
            0 => Node::Split {
                feature: r.usize()?,
                threshold: r.f64()?,
                left: r.usize()?,
                right: r.usize()?,
            },
            1 => Node::Leaf { class: r.usize()? },
            _ => return Err(r.corrupt("bad node tag")),
        };
        nodes.push(node);
    }
    // children must point forward so prediction always terminates
    for (i, node) in nodes.iter().enumerate() {
        let ok = match *node {
            Node::Split {
                feature,
                left,
                right,
                ..
            } => feature < dim && left > i && right > i && left < n && right < n,
            Node::Leaf { class } => class < n_classes,
        };
        if !ok {
            return Err(r.corrupt("malformed tree"));
        }
    }
    if nodes.is_empty() {
        return Err(r.corrupt("empty tree"));
    }
    Ok(DecisionTree { nodes })
}

fn encode_section(tag: &[u8; 4], idx: &RetrievalIndex) -> Vec<u8> {
    let mut w = Writer::default();
    match tag {
        b"CONF" => encode_config(&mut w, &idx.config),
        b"SHAP" => {
            w.usize(idx.ids.len());
            for (id, label) in idx.ids.iter().zip(&idx.labels) {
                w.str(id);
                w.opt_str(label.as_deref());
            }
        }
        b"GRAW" => {
            w.usize(idx.raw_global.len());
            for (raw, g) in idx.raw_global.iter().zip(&idx.global) {
                let s = &raw.skeleton;
                for v in [
                    s.turning_pts,
                    s.end_pts,
                    s.t_junction_pts,
                    s.cross_junction_pts,
                ] {
                    w.u32(v);
                }
                for &v in &raw.wavelet.responses {
                    w.f64(v);
                }
                for v in raw.geometric.as_array() {
                    w.f64(v);
                }
                for &v in &g.0 {
                    w.f64(v);
                }
            }
        }
        b"GSCL" => {
            for &v in idx.scaling.min.iter().chain(&idx.scaling.max) {
                w.f64(v);
            }
        }
        b"DESC" => {
            w.usize(idx.descriptors.len());
            for d in &idx.descriptors {
                w.usize(d.n);
                w.usize(d.n_dist);
                w.usize(d.n_angle);
                w.f64s(&d.hist);
            }
        }
        b"DIST" => {
            w.usize(idx.distances.len());
            for &v in idx.distances.as_slice() {
                w.f64(v);
            }
        }
        b"CLUS" => {
            let c = &idx.clusters;
            w.usize(c.m);
            w.usizes(&c.assignment);
            w.usizes(&c.medoids);
            w.usize(c.training_set.len());
            for &(i, k) in &c.training_set {
                w.usize(i);
                w.usize(k);
            }
        }
        b"FRST" => {
            let f = &idx.forest;
            w.usize(f.n_classes);
            w.usize(f.dim);
            w.usize(f.trees_per_group);
            w.u64(f.seed);
            w.usize(f.groups.len());
            for g in &f.groups {
                w.usizes(&g.mask);
                w.usize(g.trees.len());
                for t in &g.trees {
                    encode_tree(&mut w, t);
                }
            }
        }
        b"RELV" => {
            w.usize(idx.relevance.rows.len());
            w.usize(idx.relevance.n_clusters());
            for row in &idx.relevance.rows {
                for &v in row {
                    w.f64(v);
                }
            }
        }
        _ => unreachable!("unknown section"),
    }
    w.buf
}

/// Writes the index atomically (temporary file, then rename).
pub fn save_index(index: &RetrievalIndex, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let payloads: Vec<Vec<u8>> = SECTIONS.iter().map(|t| encode_section(t, index)).collect();
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(SECTIONS.len() as u32).to_le_bytes());
    let mut offset = (out.len() + SECTIONS.len() * ENTRY_LEN) as u64;
    for (tag, p) in SECTIONS.iter().zip(&payloads) {
        out.extend_from_slice(*tag);
        out.extend_from_slice(&offset.to_le_bytes());
        out.extend_from_slice(&(p.len() as u64).to_le_bytes());
        out.extend_from_slice(&crc32fast::hash(p).to_le_bytes());
        offset += p.len() as u64;
    }
    for p in &payloads {
        out.extend_from_slice(p);
    }
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, &out).map_err(|e| TsrError::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| TsrError::io(path, e))
}

pub fn load_index(path: impl AsRef<Path>) -> Result<RetrievalIndex> {
    load_index_expecting(path, FORMAT_VERSION)
}

/// Loads an index whose format version must equal `expected`.
pub fn load_index_expecting(path: impl AsRef<Path>, expected: u32) -> Result<RetrievalIndex> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| TsrError::io(path, e))?;
    decode_index(&bytes, expected)
}

fn u32_at(b: &[u8], at: usize) -> u32 {
    u32::from_le_bytes(b[at..at + 4].try_into().unwrap())
}

fn u64_at(b: &[u8], at: usize) -> u64 {
    u64::from_le_bytes(b[at..at + 8].try_into().unwrap())
}

fn section_table(bytes: &[u8], expected: u32) -> Result<Vec<([u8; 4], &[u8])>> {
    if bytes.len() < 8 || &bytes[..8] != MAGIC {
        return Err(TsrError::CorruptFile("not an index file".into()));
    }
    if bytes.len() < 16 {
        return Err(TsrError::ChecksumFailure("header".into()));
    }
    let found = u32_at(bytes, 8);
    if found != expected {
        return Err(TsrError::VersionMismatch { found, expected });
    }
    let count = u32_at(bytes, 12) as usize;
    let table_end = count
        .checked_mul(ENTRY_LEN)
        .and_then(|t| t.checked_add(16))
        .filter(|&e| e <= bytes.len())
        .ok_or_else(|| TsrError::ChecksumFailure("header".into()))?;
    let mut out = Vec::with_capacity(count);
    for e in (16..table_end).step_by(ENTRY_LEN) {
        let tag: [u8; 4] = bytes[e..e + 4].try_into().unwrap();
        let off = u64_at(bytes, e + 4);
        let len = u64_at(bytes, e + 12);
        let crc = u32_at(bytes, e + 20);
        let name = tag_name(&tag);
        let end = off.checked_add(len).filter(|&x| x <= bytes.len() as u64);
        let payload = match end {
            Some(end) => &bytes[off as usize..end as usize],
            None => return Err(TsrError::ChecksumFailure(name)),
        };
        if crc32fast::hash(payload) != crc {
            return Err(TsrError::ChecksumFailure(name));
        }
        out.push((tag, payload));
    }
    Ok(out)
}

fn find_section<'a>(table: &[([u8; 4], &'a [u8])], tag: &'static [u8; 4]) -> Result<Reader<'a>> {
    table
        .iter()
        .find(|(t, _)| t == tag)
        .map(|(_, p)| Reader::new(p, std::str::from_utf8(tag).unwrap()))
        .ok_or_else(|| TsrError::CorruptFile(format!("missing section {}", tag_name(tag))))
}

fn decode_index(bytes: &[u8], expected: u32) -> Result<RetrievalIndex> {
    let table = section_table(bytes, expected)?;
    let section = |tag: &'static [u8; 4]| find_section(&table, tag);

    let mut r = section(b"CONF")?;
    let config = decode_config(&mut r)?;
    r.finish()?;

    let mut r = section(b"SHAP")?;
    let n = r.len(9)?;
    let mut ids = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        ids.push(r.str()?);
        labels.push(r.opt_str()?);
    }
    r.finish()?;
    let check = |r: &Reader, got: usize| {
        if got == n {
            Ok(())
        } else {
            Err(r.corrupt("shape count differs"))
        }
    };

    let mut r = section(b"GRAW")?;
    let count = r.len(16)?;
    check(&r, count)?;
    let mut raw_global = Vec::with_capacity(n);
    let mut global = Vec::with_capacity(n);
    for _ in 0..n {
        let skeleton = SkeletonFeature {
            turning_pts: r.u32()?,
            end_pts: r.u32()?,
            t_junction_pts: r.u32()?,
            cross_junction_pts: r.u32()?,
        };
        let mut responses = [0.0; 5];
        for v in &mut responses {
            *v = r.f64()?;
        }
        let geometric = GeometricFeature {
            aspect_ratio: r.f64()?,
            circularity: r.f64()?,
            symmetry: r.f64()?,
            solidity: r.f64()?,
        };
        raw_global.push(RawGlobalFeature {
            skeleton,
            wavelet: WaveletFeature { responses },
            geometric,
        });
        let mut g = [0.0; GLOBAL_DIM];
        for v in &mut g {
            *v = r.f64()?;
        }
        global.push(GlobalFeature(g));
    }
    r.finish()?;

    let mut r = section(b"GSCL")?;
    let mut scaling = FeatureScaling::default();
    for v in scaling.min.iter_mut().chain(scaling.max.iter_mut()) {
        *v = r.f64()?;
    }
    r.finish()?;

    let mut r = section(b"DESC")?;
    let count = r.len(32)?;
    check(&r, count)?;
    let mut descriptors = Vec::with_capacity(n);
    for _ in 0..n {
        let d = LocalDescriptor {
            n: r.usize()?,
            n_dist: r.usize()?,
            n_angle: r.usize()?,
            hist: r.f64s()?,
        };
        if d.n != config.local.n_samples || d.hist.len() != d.n * d.n_dist * d.n_angle {
            return Err(r.corrupt("descriptor shape"));
        }
        descriptors.push(d);
    }
    r.finish()?;

    let mut r = section(b"DIST")?;
    let count = r.usize()?;
    check(&r, count)?;
    let cells = n.checked_mul(n).ok_or_else(|| r.corrupt("size overflow"))?;
    let mut data = Vec::with_capacity(cells);
    for _ in 0..cells {
        data.push(r.f64()?);
    }
    r.finish()?;
    let distances = DistanceMatrix::from_vec(n, data).map_err(|e| r.corrupt(&e.to_string()))?;

    let mut r = section(b"CLUS")?;
    let m = r.usize()?;
    let assignment = r.usizes()?;
    let medoids = r.usizes()?;
    let t = r.len(16)?;
    let mut training_set = Vec::with_capacity(t);
    for _ in 0..t {
        training_set.push((r.usize()?, r.usize()?));
    }
    r.finish()?;
    check(&r, assignment.len())?;
    if m == 0
        || medoids.len() != m
        || assignment
            .iter()
            .chain(training_set.iter().map(|(_, c)| c))
            .any(|&c| c >= m)
        || medoids
            .iter()
            .chain(training_set.iter().map(|(i, _)| i))
            .any(|&i| i >= n)
    {
        return Err(r.corrupt("inconsistent clustering"));
    }
    let clusters = ClusterModel {
        m,
        assignment,
        medoids,
        training_set,
    };

    let mut r = section(b"FRST")?;
    let n_classes = r.usize()?;
    let dim = r.usize()?;
    let trees_per_group = r.usize()?;
    let seed = r.u64()?;
    let n_groups = r.len(16)?;
    let mut groups = Vec::with_capacity(n_groups);
    for _ in 0..n_groups {
        let mask = r.usizes()?;
        if mask.iter().any(|&f| f >= dim) {
            return Err(r.corrupt("feature mask out of range"));
        }
        let nt = r.len(9)?;
        let trees = (0..nt)
            .map(|_| decode_tree(&mut r, dim, n_classes))
            .collect::<Result<Vec<_>>>()?;
        groups.push(ForestGroup { mask, trees });
    }
    r.finish()?;
    if n_classes != m || dim != GLOBAL_DIM {
        return Err(r.corrupt("forest does not match clustering"));
    }
    let forest = ForestEnsemble {
        groups,
        n_classes,
        dim,
        trees_per_group,
        seed,
    };

    let mut r = section(b"RELV")?;
    let rows_n = r.usize()?;
    let cols = r.usize()?;
    check(&r, rows_n)?;
    if cols != m {
        return Err(r.corrupt("relevance width differs from cluster count"));
    }
    let mut rows = Vec::with_capacity(n);
    for _ in 0..n {
        rows.push((0..m).map(|_| r.f64()).collect::<Result<Vec<_>>>()?);
    }
    r.finish()?;

    Ok(RetrievalIndex {
        config,
        ids,
        labels,
        raw_global,
        scaling,
        global,
        descriptors,
        distances,
        clusters,
        forest,
        relevance: RelevanceTable { rows },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::build_index;
    use crate::synth::gallery;

    fn small_index() -> RetrievalIndex {
        let shapes = gallery(&["bone", "cross", "bell"], 2, 0.5, 5);
        let config = BuildConfig {
            m: 3,
            forest: ForestParams {
                trees: 5,
                ..Default::default()
            },
            cluster: ClusterParams {
                restarts: 3,
                ..Default::default()
            },
            k: Some(2),
            ..Default::default()
        };
        build_index(&shapes, &config, true).unwrap().0
    }

    #[test]
    fn container_behaviour() {
        let idx = small_index();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("g.tsr");
        save_index(&idx, &path).unwrap();
        let back = load_index(&path).unwrap();
        assert_eq!(back, idx);
        let d1: Vec<u64> = idx
            .distances
            .as_slice()
            .iter()
            .map(|v| v.to_bits())
            .collect();
        let d2: Vec<u64> = back
            .distances
            .as_slice()
            .iter()
            .map(|v| v.to_bits())
            .collect();
        assert_eq!(d1, d2);

        assert!(matches!(
            load_index_expecting(&path, FORMAT_VERSION + 1),
            Err(TsrError::VersionMismatch {
                found: 1,
                expected: 2
            })
        ));

        let bytes = fs::read(&path).unwrap();
        for cut in [10, 40, bytes.len() / 2, bytes.len() - 1] {
            let p = dir.path().join("cut.tsr");
            fs::write(&p, &bytes[..cut]).unwrap();
            assert!(
                matches!(load_index(&p), Err(TsrError::ChecksumFailure(_))),
                "cut at {cut}"
            );
        }

        let mut flipped = bytes.clone();
        let last = flipped.len() - 3;
        flipped[last] ^= 0x40;
        let p = dir.path().join("flip.tsr");
        fs::write(&p, &flipped).unwrap();
        assert!(matches!(load_index(&p), Err(TsrError::ChecksumFailure(s)) if s == "RELV"));

        let p = dir.path().join("junk.tsr");
        fs::write(&p, b"P1\n1 1\n1\n").unwrap();
        assert!(matches!(load_index(&p), Err(TsrError::CorruptFile(_))));
    }
}
