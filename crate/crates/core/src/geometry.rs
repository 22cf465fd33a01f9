//! Point-cloud containers, radius-graph construction, farthest point
//! sampling, local center of mass and radial/angular edge embeddings.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::reps::FeatureBlock;
use crate::scalar::Scalar;

/// N node positions in d-space plus named feature blocks and optional
/// unit normals.
#[derive(Debug, Clone)]
pub struct PointCloud<T> {
    positions: Vec<T>,
    dim: usize,
    len: usize,
    features: BTreeMap<String, FeatureBlock<T>>,
    normals: Option<Vec<T>>,
}

impl<T: Scalar> PointCloud<T> {
    pub fn new(positions: Vec<T>, dim: usize) -> Result<Self> {
        if dim == 0 || !positions.len().is_multiple_of(dim) {
            return Err(Error::DimMismatch {
                context: "PointCloud::new",
                expected: dim,
                got: positions.len(),
            });
        }
        let len = positions.len() / dim;
        Ok(PointCloud {
            positions,
            dim,
            len,
            features: BTreeMap::new(),
            normals: None,
        })
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn position(&self, i: usize) -> &[T] {
        &self.positions[i * self.dim..(i + 1) * self.dim]
    }

    pub fn positions(&self) -> &[T] {
        &self.positions
    }

    pub fn positions_mut(&mut self) -> &mut [T] {
        &mut self.positions
    }

    /// Attaches a named feature block; row count must match.
    pub fn insert_features(&mut self, name: &str, block: FeatureBlock<T>) -> Result<()> {
        if block.rows() != self.len {
            return Err(Error::WidthMismatch {
                context: "PointCloud::insert_features: row count",
                expected: self.len,
                got: block.rows(),
            });
        }
        self.features.insert(name.to_string(), block);
        Ok(())
    }

    pub fn features(&self) -> &BTreeMap<String, FeatureBlock<T>> {
        &self.features
    }

    pub fn feature(&self, name: &str) -> Option<&FeatureBlock<T>> {
        self.features.get(name)
    }

    /// Stores per-node normals after checking unit norm within 1e-9 scale.
    pub fn set_normals(&mut self, normals: Vec<T>) -> Result<()> {
        if normals.len() != self.len * self.dim {
            return Err(Error::WidthMismatch {
                context: "PointCloud::set_normals",
                expected: self.len * self.dim,
                got: normals.len(),
            });
        }
        let tol = T::of(1e-9).max(T::epsilon() * T::of(64.0));
        for i in 0..self.len {
            let n = &normals[i * self.dim..(i + 1) * self.dim];
            let len = crate::linalg::norm(n);
            if (len - T::one()).abs() > tol {
                return Err(Error::OutOfRange {
                    context: "PointCloud::set_normals",
                    msg: format!("normal {i} has norm {len}"),
                });
            }
        }
        self.normals = Some(normals);
        Ok(())
    }

    pub fn normals(&self) -> Option<&[T]> {
        self.normals.as_deref()
    }

    pub fn normal(&self, i: usize) -> Option<&[T]> {
        self.normals
            .as_ref()
            .map(|n| &n[i * self.dim..(i + 1) * self.dim])
    }
}

/// Radius-cutoff neighbor lists in CSR layout with cached relative
/// vectors x_to − x_from and distances. Strictly inside (0, r_c).
#[derive(Debug, Clone)]
pub struct Graph<T> {
    dim: usize,
    r_c: T,
    offsets: Vec<usize>,
    to: Vec<usize>,
    dist: Vec<T>,
    rel: Vec<T>,
}

/// One cached edge of a [`Graph`].
#[derive(Debug, Clone, Copy)]
pub struct EdgeRef<'a, T> {
    pub to: usize,
    pub dist: T,
    /// x_to − x_from.
    pub rel: &'a [T],
}

impl<T: Scalar> Graph<T> {
    pub fn len(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn cutoff(&self) -> T {
        self.r_c
    }

    pub fn degree(&self, node: usize) -> usize {
        self.offsets[node + 1] - self.offsets[node]
    }

    pub fn edges(&self, node: usize) -> impl Iterator<Item = EdgeRef<'_, T>> {
        let dim = self.dim;
        (self.offsets[node]..self.offsets[node + 1]).map(move |e| EdgeRef {
            to: self.to[e],
            dist: self.dist[e],
            rel: &self.rel[e * dim..(e + 1) * dim],
        })
    }

    pub fn edge_count(&self) -> usize {
        self.to.len()
    }
}

/// Builds the radius graph with strict cutoff: edge (i,j) iff
/// ‖x_j − x_i‖ < r_c and i ≠ j. Neighbor lists sorted by node index.
pub fn radius_graph<T: Scalar>(cloud: &PointCloud<T>, r_c: T) -> Graph<T> {
    assert!(r_c > T::zero(), "cutoff radius must be positive");
    let n = cloud.len();
    let dim = cloud.dim();
    let mut offsets = Vec::with_capacity(n + 1);
    let mut to = Vec::new();
    let mut dist = Vec::new();
    let mut rel = Vec::new();
    offsets.push(0);
    for i in 0..n {
        let xi = cloud.position(i);
        for j in 0..n {
            if i == j {
                continue;
            }
            let xj = cloud.position(j);
            let mut d2 = T::zero();
            for k in 0..dim {
                let diff = xj[k] - xi[k];
                d2 += diff * diff;
            }
            let d = d2.sqrt();
            if d < r_c {
                to.push(j);
                dist.push(d);
                for k in 0..dim {
                    rel.push(xj[k] - xi[k]);
                }
            }
        }
        offsets.push(to.len());
    }
    Graph {
        dim,
        r_c,
        offsets,
        to,
        dist,
        rel,
    }
}

/// Greedy max-min farthest point sampling starting from `start`.
/// Ties break toward the lowest node index; output is in selection order.
#[allow(clippy::needless_range_loop)] // j names a node, not just an index
pub fn farthest_point_sampling<T: Scalar>(
    cloud: &PointCloud<T>,
    count: usize,
    start: usize,
) -> Result<Vec<usize>> {
    let n = cloud.len();
    if count == 0 || count > n {
        return Err(Error::OutOfRange {
            context: "farthest_point_sampling",
            msg: format!("count {count} not in 1..={n}"),
        });
    }
    if start >= n {
        return Err(Error::OutOfRange {
            context: "farthest_point_sampling",
            msg: format!("start {start} out of range for {n} nodes"),
        });
    }
    let dim = cloud.dim();
    let dist2 = |a: usize, b: usize| {
        let xa = cloud.position(a);
        let xb = cloud.position(b);
        let mut acc = T::zero();
        for k in 0..dim {
            let diff = xa[k] - xb[k];
            acc += diff * diff;
        }
        acc
    };
    let mut selected = Vec::with_capacity(count);
    let mut min_d2 = vec![T::infinity(); n];
    let mut cur = start;
    selected.push(cur);
    for _ in 1..count {
        let mut best = usize::MAX;
        let mut best_d2 = T::neg_infinity();
        for j in 0..n {
            let d2 = dist2(cur, j).min(min_d2[j]);
            min_d2[j] = d2;
            if selected.contains(&j) {
                continue;
            }
            if d2 > best_d2 {
                best_d2 = d2;
                best = j;
            }
        }
        cur = best;
        selected.push(cur);
    }
    Ok(selected)
}

/// Envelope-weighted sum of relative neighbor positions
/// Σ ω(‖x_j − x_i‖)(x_j − x_i); zero vector for isolated nodes.
pub fn local_center_of_mass<T: Scalar>(
    graph: &Graph<T>,
    node: usize,
    envelope: impl Fn(T) -> T,
) -> Vec<T> {
    let mut out = vec![T::zero(); graph.dim];
    for e in graph.edges(node) {
        let w = envelope(e.dist);
        for (o, r) in out.iter_mut().zip(e.rel) {
            *o += w * *r;
        }
    }
    out
}

/// Gaussian radial embedding with k means equidistant on [0, r_max]
/// (endpoints included) and σ chosen so adjacent curves cross at 0.5.
pub fn gaussian_radial_embedding<T: Scalar>(r: T, k: usize, r_max: T) -> Result<Vec<T>> {
    if k < 2 {
        return Err(Error::OutOfRange {
            context: "gaussian_radial_embedding",
            msg: format!("k = {k}, need at least 2"),
        });
    }
    let spacing = r_max / T::of((k - 1) as f64);
    // Adjacent Gaussians meet at 0.5 when σ = Δ / (2 √(2 ln 2)).
    let sigma = spacing / (T::of(2.0) * (T::of(2.0) * T::of(2.0).ln()).sqrt());
    let denom = T::of(2.0) * sigma * sigma;
    let mut out = Vec::with_capacity(k);
    for i in 0..k {
        let mu = spacing * T::of(i as f64);
        let diff = r - mu;
        out.push((-(diff * diff) / denom).exp());
    }
    Ok(out)
}

/// Normalizes an edge vector; the zero vector maps to zero with the
/// degeneracy flag set instead of erroring.
pub fn unit_edge_direction<T: Scalar>(v: &[T]) -> (Vec<T>, bool) {
    let n = crate::linalg::norm(v);
    if n == T::zero() {
        return (vec![T::zero(); v.len()], true);
    }
    (v.iter().map(|&x| x / n).collect(), false)
}

// --- point-cloud file format -------------------------------------------
//
// Plain text, one node per line, `x y z [nx ny nz]`, whitespace-separated,
// '#' comments. A sidecar JSON header (same path with `.json` appended)
// names feature blocks with their rep spec strings and carries the values.

fn sidecar_path(path: &Path) -> std::path::PathBuf {
    let mut s = path.as_os_str().to_os_string();
    s.push(".json");
    std::path::PathBuf::from(s)
}

pub fn write_cloud<T: Scalar>(path: &Path, cloud: &PointCloud<T>) -> Result<()> {
    let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(file, "# point cloud: {} nodes, dim {}", cloud.len(), cloud.dim())?;
    for i in 0..cloud.len() {
        let mut line = String::new();
        for (k, x) in cloud.position(i).iter().enumerate() {
            if k > 0 {
                line.push(' ');
            }
            line.push_str(&format!("{:.17e}", x.as_f64()));
        }
        if let Some(n) = cloud.normal(i) {
            for x in n {
                line.push_str(&format!(" {:.17e}", x.as_f64()));
            }
        }
        writeln!(file, "{line}")?;
    }
    file.flush()?;

    if !cloud.features().is_empty() {
        let mut blocks = serde_json::Map::new();
        for (name, block) in cloud.features() {
            let rows: Vec<Vec<f64>> = (0..block.rows())
                .map(|i| block.row(i).iter().map(|x| x.as_f64()).collect())
                .collect();
            blocks.insert(
                name.clone(),
                serde_json::json!({ "rep": block.spec().to_string(), "values": rows }),
            );
        }
        let header = serde_json::json!({ "dim": cloud.dim(), "features": blocks });
        let text = serde_json::to_string_pretty(&header).expect("header serializes");
        std::fs::write(sidecar_path(path), text)?;
    }
    Ok(())
}

pub fn read_cloud<T: Scalar>(path: &Path) -> Result<PointCloud<T>> {
    let file = std::io::BufReader::new(std::fs::File::open(path)?);
    let mut positions = Vec::new();
    let mut normals = Vec::new();
    let mut dim = 0usize;
    let mut has_normals = false;
    for (lineno, line) in file.lines().enumerate() {
        let line = line?;
        let body = line.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let fields: Vec<f64> = body
            .split_whitespace()
            .map(|t| {
                t.parse::<f64>().map_err(|_| Error::Format {
                    path: path.display().to_string(),
                    msg: format!("line {}: bad number `{t}`", lineno + 1),
                })
            })
            .collect::<Result<_>>()?;
        if dim == 0 {
            match fields.len() {
                2 | 3 => dim = fields.len(),
                4 | 6 => {
                    dim = fields.len() / 2;
                    has_normals = true;
                }
                other => {
                    return Err(Error::Format {
                        path: path.display().to_string(),
                        msg: format!("line {}: {other} columns unsupported", lineno + 1),
                    })
                }
            }
        }
        let expected = if has_normals { 2 * dim } else { dim };
        if fields.len() != expected {
            return Err(Error::Format {
                path: path.display().to_string(),
                msg: format!("line {}: expected {expected} columns", lineno + 1),
            });
        }
        positions.extend(fields[..dim].iter().map(|&f| T::of(f)));
        if has_normals {
            normals.extend(fields[dim..2 * dim].iter().map(|&f| T::of(f)));
        }
    }
    let mut cloud = PointCloud::new(positions, dim.max(1))?;
    if has_normals {
        cloud.set_normals(normals)?;
    }

    let sidecar = sidecar_path(path);
    if sidecar.exists() {
        let text = std::fs::read_to_string(&sidecar)?;
        let header: serde_json::Value = serde_json::from_str(&text).map_err(|e| Error::Format {
            path: sidecar.display().to_string(),
            msg: e.to_string(),
        })?;
        if let Some(blocks) = header.get("features").and_then(|v| v.as_object()) {
            for (name, entry) in blocks {
                let bad = |msg: &str| Error::Format {
                    path: sidecar.display().to_string(),
                    msg: format!("feature `{name}`: {msg}"),
                };
                let rep = entry
                    .get("rep")
                    .and_then(|v| v.as_str())
                    .ok_or_else(|| bad("missing rep"))?;
                let spec = crate::reps::parse_rep_spec(rep, cloud.dim())?;
                let rows = entry
                    .get("values")
                    .and_then(|v| v.as_array())
                    .ok_or_else(|| bad("missing values"))?;
                let mut vals = Vec::with_capacity(rows.len() * spec.width());
                for row in rows {
                    let row = row.as_array().ok_or_else(|| bad("row is not an array"))?;
                    for v in row {
                        vals.push(T::of(v.as_f64().ok_or_else(|| bad("non-numeric value"))?));
                    }
                }
                let block = FeatureBlock::new(vals, rows.len(), spec)?;
                cloud.insert_features(name, block)?;
            }
        }
    }
    Ok(cloud)
}
