//! CSV and JSON exports, and the content-addressed binary cache.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use faer::Mat;
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dist::DistanceMatrix;
use crate::embed::{CoordLabel, DiffusionTime, EmbeddingKind, EmbeddingTable};
use crate::error::{Error, Result};
use crate::group::{ActionSpec, Group, OrbitGrid};
use crate::kernel::{CloudMeta, FourierBlocks, PointCloud};
use crate::spectral::{FrequencySpectrum, Scree, SpectralData};

/// Overrides the cache directory of a pipeline run.
pub const CACHE_ENV: &str = "EQUIMAPS_CACHE_DIR";

fn format_err(path: &Path, reason: impl Into<String>) -> Error {
    Error::Format { path: path.display().to_string(), reason: reason.into() }
}

/// Path of the JSON file that accompanies `path`.
pub fn sidecar_path(path: &Path) -> PathBuf {
    path.with_extension("json")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CloudSidecar {
    pub dim: usize,
    pub n: usize,
    pub action: ActionSpec,
    pub meta: CloudMeta,
}

/// Writes one point per row under an `x0,x1,...` header, plus the JSON sidecar.
pub fn write_cloud(cloud: &PointCloud, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record((0..cloud.dim()).map(|k| format!("x{k}")))?;
    for x in cloud.points() {
        w.write_record(x.iter().map(|v| v.to_string()))?;
    }
    w.flush()?;
    let side = CloudSidecar { dim: cloud.dim(), n: cloud.len(), action: cloud.action, meta: cloud.meta.clone() };
    write_json(&sidecar_path(path), &side)
}

/// Reads a cloud CSV. The header row and the sidecar are optional; without a
/// sidecar the action rotates the first two coordinates.
pub fn read_cloud(path: &Path) -> Result<PointCloud> {
    let mut r = csv::ReaderBuilder::new().has_headers(false).trim(csv::Trim::All).from_path(path)?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (k, rec) in r.records().enumerate() {
        let rec = rec?;
        let parsed: std::result::Result<Vec<f64>, _> = rec.iter().map(str::parse::<f64>).collect();
        match parsed {
            Ok(v) => rows.push(v),
            Err(_) if k == 0 => continue,
            Err(e) => return Err(format_err(path, format!("row {k}: {e}"))),
        }
    }
    if rows.is_empty() {
        return Err(format_err(path, "no points"));
    }
    let side = sidecar_path(path);
    let (action, meta) = if side.exists() {
        let s: CloudSidecar = read_json(&side)?;
        if s.n != rows.len() || s.dim != rows[0].len() {
            return Err(format_err(&side, format!("sidecar says {}x{}, file has {}x{}", s.n, s.dim, rows.len(), rows[0].len())));
        }
        (s.action, s.meta)
    } else {
        (ActionSpec::default(), CloudMeta::default())
    };
    Ok(PointCloud::new(rows, action)?.with_meta(meta))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut f = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut f, value)?;
    f.write_all(b"\n")?;
    f.flush()?;
    Ok(())
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let f = BufReader::new(File::open(path)?);
    Ok(serde_json::from_reader(f)?)
}

/// Columns `rank, l, n, lambda, lambda_pow_t`.
pub fn write_scree(scree: &Scree, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["rank", "l", "n", "lambda", "lambda_pow_t"])?;
    for e in &scree.entries {
        w.write_record([e.rank.to_string(), e.freq.to_string(), e.n.to_string(), e.lambda.to_string(), e.lambda_pow_t.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingHeader {
    pub kind: EmbeddingKind,
    pub time: DiffusionTime,
    pub delta: f64,
    pub n: usize,
    pub labels: Vec<CoordLabel>,
    pub columns: Vec<String>,
    /// Weight of each coordinate in the embedding norm.
    pub weights: Vec<f64>,
}

/// One row per point with `<label>_re`, `<label>_im` columns, plus a JSON header file.
pub fn write_embedding(table: &EmbeddingTable, path: &Path) -> Result<()> {
    let columns: Vec<String> = table.labels.iter().map(CoordLabel::column).collect();
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["i".to_string()];
    for c in &columns {
        header.push(format!("{c}_re"));
        header.push(format!("{c}_im"));
    }
    w.write_record(&header)?;
    for (i, row) in table.rows.iter().enumerate() {
        let mut rec = Vec::with_capacity(1 + 2 * row.len());
        rec.push(i.to_string());
        for z in row {
            rec.push(z.re.to_string());
            rec.push(z.im.to_string());
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    let head = EmbeddingHeader {
        kind: table.kind,
        time: table.time,
        delta: table.delta,
        n: table.len(),
        labels: table.labels.clone(),
        columns,
        weights: table.weights.clone(),
    };
    write_json(&sidecar_path(path), &head)
}

/// Reads an embedding written by [`write_embedding`].
pub fn read_embedding(path: &Path) -> Result<EmbeddingTable> {
    let head: EmbeddingHeader = read_json(&sidecar_path(path))?;
    let mut r = csv::Reader::from_path(path)?;
    let mut rows = Vec::with_capacity(head.n);
    for rec in r.records() {
        let rec = rec?;
        if rec.len() != 1 + 2 * head.labels.len() {
            return Err(format_err(path, format!("expected {} fields, got {}", 1 + 2 * head.labels.len(), rec.len())));
        }
        let vals: Vec<f64> = rec.iter().skip(1).map(str::parse::<f64>).collect::<std::result::Result<_, _>>().map_err(|e| format_err(path, e.to_string()))?;
        rows.push(vals.chunks_exact(2).map(|c| C64::new(c[0], c[1])).collect());
    }
    Ok(EmbeddingTable { kind: head.kind, time: head.time, delta: head.delta, labels: head.labels, weights: head.weights, rows })
}

/// Square matrix with header `i,d_0,...,d_{n-1}`.
pub fn write_distance_matrix(m: &DistanceMatrix, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["i".to_string()];
    header.extend((0..m.n).map(|j| format!("d_{j}")));
    w.write_record(&header)?;
    for i in 0..m.n {
        let mut rec = vec![i.to_string()];
        rec.extend(m.row(i).iter().map(|v| v.to_string()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Rows `i, j, angle, value` for `i < j` of an aligned matrix.
pub fn write_aligned(m: &DistanceMatrix, path: &Path) -> Result<()> {
    let angles = m.angles.as_ref().ok_or_else(|| crate::error::invalid("matrix", "no alignment angles"))?;
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["i", "j", "angle", "value"])?;
    for i in 0..m.n {
        for j in i + 1..m.n {
            w.write_record([i.to_string(), j.to_string(), angles[i * m.n + j].to_string(), m.get(i, j).to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Point coordinates with a distance column: `index, x0, ..., distance`.
pub fn write_heatmap(cloud: &PointCloud, distances: &[f64], path: &Path) -> Result<()> {
    if distances.len() != cloud.len() {
        return Err(crate::error::invalid("distances", format!("{} values for {} points", distances.len(), cloud.len())));
    }
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["index".to_string()];
    header.extend((0..cloud.dim()).map(|k| format!("x{k}")));
    header.push("distance".into());
    w.write_record(&header)?;
    for (i, (x, d)) in cloud.points().zip(distances).enumerate() {
        let mut rec = vec![i.to_string()];
        rec.extend(x.iter().map(|v| v.to_string()));
        rec.push(d.to_string());
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Hex SHA-256 of everything the Fourier blocks depend on.
pub fn content_hash(cloud: &PointCloud, eps: f64, l_max: usize, grid: &OrbitGrid) -> String {
    let mut h = Sha256::new();
    h.update(b"equimaps-fourier-v1");
    h.update((cloud.dim() as u64).to_le_bytes());
    h.update((cloud.len() as u64).to_le_bytes());
    for v in cloud.coords() {
        h.update(v.to_le_bytes());
    }
    for p in cloud.action.plane {
        h.update((p as u64).to_le_bytes());
    }
    h.update(eps.to_le_bytes());
    h.update((l_max as u64).to_le_bytes());
    let (tag, order) = group_tag(grid.group);
    h.update([tag]);
    h.update(order.to_le_bytes());
    h.update((grid.nodes as u64).to_le_bytes());
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

fn group_tag(g: Group) -> (u8, u64) {
    match g {
        Group::So2 => (0, 0),
        Group::Cyclic { order } => (1, order as u64),
    }
}

/// Binary cache of blocks and spectra, one file per content hash.
#[derive(Clone, Debug)]
pub struct Cache {
    pub dir: PathBuf,
}

const BLOCKS_MAGIC: &[u8; 8] = b"EQFBLK01";
const SPECTRA_MAGIC: &[u8; 8] = b"EQSPEC01";

impl Cache {
    pub fn new(dir: impl Into<PathBuf>) -> Result<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir)?;
        Ok(Cache { dir })
    }

    /// Directory from [`CACHE_ENV`] if set, otherwise `fallback`.
    pub fn from_env_or(fallback: impl Into<PathBuf>) -> Result<Self> {
        match std::env::var_os(CACHE_ENV) {
            Some(d) if !d.is_empty() => Cache::new(PathBuf::from(d)),
            _ => Cache::new(fallback),
        }
    }

    pub fn blocks_path(&self, key: &str) -> PathBuf {
        self.dir.join(format!("{key}.blocks"))
    }

    pub fn spectra_path(&self, key: &str) -> PathBuf {
        self.dir.join(format!("{key}.spectra"))
    }

    pub fn store_blocks(&self, key: &str, b: &FourierBlocks) -> Result<()> {
        let mut w = Writer::new();
        w.bytes(BLOCKS_MAGIC);
        w.header(b.eps, &b.grid, &b.degrees);
        w.u64(b.blocks.len() as u64);
        for m in &b.blocks {
            w.mat(m);
        }
        w.commit(&self.blocks_path(key))
    }

    pub fn load_blocks(&self, key: &str) -> Result<Option<FourierBlocks>> {
        let path = self.blocks_path(key);
        let Some(mut r) = Reader::open(&path, BLOCKS_MAGIC)? else { return Ok(None) };
        let (eps, grid, degrees) = r.header()?;
        let n = degrees.len();
        let count = r.u64()? as usize;
        let blocks = (0..count).map(|_| r.mat(n, n)).collect::<Result<Vec<_>>>()?;
        r.finish()?;
        Ok(Some(FourierBlocks { eps, grid, blocks, degrees }))
    }

    pub fn store_spectra(&self, key: &str, s: &SpectralData) -> Result<()> {
        let mut w = Writer::new();
        w.bytes(SPECTRA_MAGIC);
        w.header(s.eps, &s.grid, &s.degrees);
        w.u64(s.spectra.len() as u64);
        for f in &s.spectra {
            w.u64(f.freq as u64);
            w.u64(f.multiplicity as u64);
            w.u64(f.eigenvalues.len() as u64);
            for &v in &f.eigenvalues {
                w.f64(v);
            }
            w.mat(&f.vectors);
        }
        w.commit(&self.spectra_path(key))
    }

    pub fn load_spectra(&self, key: &str) -> Result<Option<SpectralData>> {
        let path = self.spectra_path(key);
        let Some(mut r) = Reader::open(&path, SPECTRA_MAGIC)? else { return Ok(None) };
        let (eps, grid, degrees) = r.header()?;
        let n = degrees.len();
        let count = r.u64()? as usize;
        let mut spectra = Vec::with_capacity(count);
        for _ in 0..count {
            let freq = r.u64()? as usize;
            let multiplicity = r.u64()? as usize;
            let k = r.u64()? as usize;
            let eigenvalues = (0..k).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
            let vectors = r.mat(n, k)?;
            spectra.push(FrequencySpectrum { freq, multiplicity, eigenvalues, vectors });
        }
        r.finish()?;
        Ok(Some(SpectralData::from_parts(eps, grid, degrees, spectra)?))
    }
}

struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    fn new() -> Self {
        Writer { buf: Vec::new() }
    }

    fn bytes(&mut self, b: &[u8]) {
        self.buf.extend_from_slice(b);
    }

    fn u64(&mut self, v: u64) {
        self.bytes(&v.to_le_bytes());
    }

    fn f64(&mut self, v: f64) {
        self.bytes(&v.to_le_bytes());
    }

    fn header(&mut self, eps: f64, grid: &OrbitGrid, degrees: &[f64]) {
        self.f64(eps);
        let (tag, order) = group_tag(grid.group);
        self.bytes(&[tag]);
        self.u64(order);
        self.u64(grid.nodes as u64);
        self.u64(degrees.len() as u64);
        for &d in degrees {
            self.f64(d);
        }
    }

    fn mat(&mut self, m: &Mat<C64>) {
        for j in 0..m.ncols() {
            for i in 0..m.nrows() {
                self.f64(m[(i, j)].re);
                self.f64(m[(i, j)].im);
            }
        }
    }

    /// Writes to a temporary file and renames it into place.
    fn commit(self, path: &Path) -> Result<()> {
        let tmp = path.with_extension("partial");
        let mut f = BufWriter::new(File::create(&tmp)?);
        f.write_all(&self.buf)?;
        f.flush()?;
        drop(f);
        fs::rename(&tmp, path)?;
        Ok(())
    }
}

struct Reader {
    path: PathBuf,
    buf: Vec<u8>,
    pos: usize,
}

impl Reader {
    fn open(path: &Path, magic: &[u8; 8]) -> Result<Option<Self>> {
        if !path.exists() {
            return Ok(None);
        }
        let mut buf = Vec::new();
        File::open(path)?.read_to_end(&mut buf)?;
        if buf.len() < 8 || &buf[..8] != magic {
            return Err(format_err(path, "bad cache header"));
        }
        Ok(Some(Reader { path: path.to_path_buf(), buf, pos: 8 }))
    }

    fn take<const K: usize>(&mut self) -> Result<[u8; K]> {
        let end = self.pos + K;
        let s = self.buf.get(self.pos..end).ok_or_else(|| format_err(&self.path, "truncated cache file"))?;
        self.pos = end;
        Ok(s.try_into().expect("slice of length K"))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take()?))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take()?))
    }

    fn header(&mut self) -> Result<(f64, OrbitGrid, Vec<f64>)> {
        let eps = self.f64()?;
        let [tag] = self.take::<1>()?;
        let order = self.u64()? as usize;
        let nodes = self.u64()? as usize;
        let group = match tag {
            0 => Group::So2,
            1 => Group::Cyclic { order },
            _ => return Err(format_err(&self.path, format!("unknown group tag {tag}"))),
        };
        let grid = OrbitGrid::for_group(group, nodes)?;
        let n = self.u64()? as usize;
        let degrees = (0..n).map(|_| self.f64()).collect::<Result<Vec<_>>>()?;
        Ok((eps, grid, degrees))
    }

    fn mat(&mut self, rows: usize, cols: usize) -> Result<Mat<C64>> {
        let mut m = Mat::<C64>::zeros(rows, cols);
        for j in 0..cols {
            for i in 0..rows {
                m[(i, j)] = C64::new(self.f64()?, self.f64()?);
            }
        }
        Ok(m)
    }

    fn finish(self) -> Result<()> {
        if self.pos != self.buf.len() {
            return Err(format_err(&self.path, "trailing bytes in cache file"));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate, DatasetSpec};
    use crate::dist::{pairwise_matrix, DistanceKind};
    use crate::embed::Embedder;
    use crate::kernel::fourier_blocks;
    use crate::spectral::{scree, spectral_data};

    #[test]
    fn cloud_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("cloud.csv");
        let c = generate(&DatasetSpec::torus(20, 3).with_copy(2, 1.0)).unwrap();
        write_cloud(&c, &p).unwrap();
        let back = read_cloud(&p).unwrap();
        assert_eq!(back.coords(), c.coords());
        assert_eq!(back.meta, c.meta);

        let q = dir.path().join("plain.csv");
        fs::write(&q, "1,0,0\n0,2,0.5\n").unwrap();
        let plain = read_cloud(&q).unwrap();
        assert_eq!(plain.len(), 2);
        assert_eq!(plain.action, ActionSpec::default());
        fs::write(&q, "x,y\n1,oops\n").unwrap();
        assert!(matches!(read_cloud(&q), Err(Error::Format { .. })));
    }

    #[test]
    fn cache_round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let cache = Cache::new(dir.path()).unwrap();
        let c = generate(&DatasetSpec::sphere(15, 1)).unwrap();
        let grid = OrbitGrid::so2(16).unwrap();
        let b = fourier_blocks(&c, 0.5, 4, grid).unwrap();
        let key = content_hash(&c, 0.5, 4, &grid);
        assert_ne!(key, content_hash(&c, 0.6, 4, &grid));
        assert!(cache.load_blocks(&key).unwrap().is_none());
        cache.store_blocks(&key, &b).unwrap();
        let back = cache.load_blocks(&key).unwrap().unwrap();
        assert_eq!(back.degrees, b.degrees);
        assert_eq!(back.blocks, b.blocks);

        let s = spectral_data(&b).unwrap();
        cache.store_spectra(&key, &s).unwrap();
        let t = cache.load_spectra(&key).unwrap().unwrap();
        assert_eq!(t.all_eigenvalues(), s.all_eigenvalues());
        assert_eq!(t.spectra[3].vectors, s.spectra[3].vectors);

        fs::write(cache.spectra_path("bad"), b"EQSPEC01\x01").unwrap();
        assert!(cache.load_spectra("bad").is_err());
    }

    #[test]
    fn exports_have_expected_shape() {
        let dir = tempfile::tempdir().unwrap();
        let c = generate(&DatasetSpec::torus(12, 5)).unwrap();
        let s = spectral_data(&fourier_blocks(&c, 1.0, 3, OrbitGrid::so2(8).unwrap()).unwrap()).unwrap();
        let p = dir.path().join("scree.csv");
        write_scree(&scree(&s, 2), &p).unwrap();
        let text = fs::read_to_string(&p).unwrap();
        assert!(text.starts_with("rank,l,n,lambda,lambda_pow_t\n0,0,0,0.99999"), "{text}");
        assert_eq!(text.lines().count(), 1 + 12 * 4);

        let table = Embedder::new(&s, 2, 1e-3).unwrap().table(EmbeddingKind::InvariantWalk).unwrap();
        let p = dir.path().join("emb.csv");
        write_embedding(&table, &p).unwrap();
        let back = read_embedding(&p).unwrap();
        assert_eq!(back, table);

        let m = pairwise_matrix(&s, DistanceKind::Aligned, 2, 1e-3).unwrap();
        let p = dir.path().join("aligned.csv");
        write_aligned(&m, &p).unwrap();
        assert_eq!(fs::read_to_string(&p).unwrap().lines().count(), 1 + 12 * 11 / 2);
        let p = dir.path().join("d.csv");
        write_distance_matrix(&m, &p).unwrap();
        assert!(fs::read_to_string(&p).unwrap().starts_with("i,d_0,d_1,"));
        let p = dir.path().join("heat.csv");
        write_heatmap(&c, m.row(0), &p).unwrap();
        assert!(fs::read_to_string(&p).unwrap().starts_with("index,x0,x1,x2,distance\n0,"));
        assert!(write_heatmap(&c, &[0.0], &p).is_err());
    }
}
