//! Content-addressed on-disk caches for eigensystems and signature matrices.
//!
//! Every file starts with an 8-byte magic and a little-endian `u32` format
//! version, followed by the mesh content hash and the payload. Files are
//! written to a temporary sibling and renamed into place, so concurrent
//! readers never observe a partial entry.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;

use crate::eigen::EigenSystem;
use crate::error::{Error, Result};
use crate::sgws::SignatureMatrix;

const EIGEN_MAGIC: &[u8; 8] = b"GSGWEIG\0";
const SIGNATURE_MAGIC: &[u8; 8] = b"GSGWSIG\0";
const FORMAT_VERSION: u32 = 1;

pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    fs::create_dir_all(dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(|| {
            Error::Cache {
                path: self.path.to_path_buf(),
                message: "truncated cache file".into(),
            }
        })?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn usize(&mut self) -> Result<usize> {
        let v = self.u64()?;
        usize::try_from(v).map_err(|_| self.bad("length does not fit in memory"))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let raw = self.take(n.checked_mul(8).ok_or_else(|| self.bad("length overflow"))?)?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }

    fn string(&mut self) -> Result<String> {
        let n = self.usize()?;
        let raw = self.take(n)?;
        String::from_utf8(raw.to_vec()).map_err(|_| self.bad("invalid UTF-8"))
    }

    fn bad(&self, message: &str) -> Error {
        Error::Cache {
            path: self.path.to_path_buf(),
            message: message.into(),
        }
    }
}

fn put_str(buf: &mut Vec<u8>, s: &str) {
    buf.extend_from_slice(&(s.len() as u64).to_le_bytes());
    buf.extend_from_slice(s.as_bytes());
}

fn put_f64s(buf: &mut Vec<u8>, xs: impl IntoIterator<Item = f64>) {
    for x in xs {
        buf.extend_from_slice(&x.to_le_bytes());
    }
}

fn open<'a>(path: &'a Path, bytes: &'a [u8], magic: &[u8; 8]) -> Result<Reader<'a>> {
    let mut r = Reader { bytes, pos: 0, path };
    if r.take(8)? != magic {
        return Err(r.bad("wrong magic"));
    }
    let version = r.u32()?;
    if version != FORMAT_VERSION {
        return Err(r.bad(&format!("unsupported format version {version}")));
    }
    Ok(r)
}

pub fn encode_eigensystem(mesh_hash: &str, variant: &str, es: &EigenSystem) -> Vec<u8> {
    let (m, k) = (es.vertex_count(), es.k());
    let mut buf = Vec::with_capacity(64 + 8 * (k + m * k + m));
    buf.extend_from_slice(EIGEN_MAGIC);
    buf.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    put_str(&mut buf, mesh_hash);
    put_str(&mut buf, variant);
    buf.extend_from_slice(&(m as u64).to_le_bytes());
    buf.extend_from_slice(&(k as u64).to_le_bytes());
    put_f64s(&mut buf, es.eigenvalues().iter().copied());
    put_f64s(&mut buf, es.eigenfunctions().iter().copied());
    put_f64s(&mut buf, es.mass().iter().copied());
    buf
}

/// Decodes an eigensystem entry; returns `None` when the entry belongs to a
/// different mesh or variant.
pub fn decode_eigensystem(
    path: &Path,
    bytes: &[u8],
    mesh_hash: &str,
    variant: &str,
) -> Result<Option<EigenSystem>> {
    let mut r = open(path, bytes, EIGEN_MAGIC)?;
    if r.string()? != mesh_hash || r.string()? != variant {
        return Ok(None);
    }
    let m = r.usize()?;
    let k = r.usize()?;
    let values = r.f64s(k)?;
    let vectors = r.f64s(m.checked_mul(k).ok_or_else(|| r.bad("length overflow"))?)?;
    let mass = r.f64s(m)?;
    let es = EigenSystem::from_parts(values, DMatrix::from_vec(m, k, vectors), mass)
        .map_err(|e| r.bad(&e.to_string()))?;
    Ok(Some(es))
}

pub fn encode_signature(mesh_hash: &str, kernel_id: &str, k: usize, sig: &SignatureMatrix) -> Vec<u8> {
    let s = sig.matrix();
    let mut buf = Vec::with_capacity(64 + 8 * s.len());
    buf.extend_from_slice(SIGNATURE_MAGIC);
    buf.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    put_str(&mut buf, mesh_hash);
    put_str(&mut buf, kernel_id);
    buf.extend_from_slice(&(k as u64).to_le_bytes());
    buf.extend_from_slice(&(sig.resolution() as u64).to_le_bytes());
    buf.extend_from_slice(&(s.ncols() as u64).to_le_bytes());
    put_f64s(&mut buf, s.iter().copied());
    buf
}

pub fn decode_signature(
    path: &Path,
    bytes: &[u8],
    mesh_hash: &str,
    kernel_id: &str,
    k: usize,
    resolution: usize,
) -> Result<Option<SignatureMatrix>> {
    let mut r = open(path, bytes, SIGNATURE_MAGIC)?;
    if r.string()? != mesh_hash || r.string()? != kernel_id {
        return Ok(None);
    }
    if r.usize()? != k || r.usize()? != resolution {
        return Ok(None);
    }
    let m = r.usize()?;
    let p = crate::sgws::signature_length(resolution);
    let data = r.f64s(p.checked_mul(m).ok_or_else(|| r.bad("length overflow"))?)?;
    Ok(Some(SignatureMatrix::from_matrix(resolution, DMatrix::from_vec(p, m, data))?))
}

/// Directory layout of the on-disk cache.
#[derive(Debug, Clone)]
pub struct CacheDir {
    root: PathBuf,
}

impl CacheDir {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        CacheDir { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn eigen_path(&self, mesh_hash: &str, variant: &str) -> PathBuf {
        self.root.join("eigen").join(format!("{mesh_hash}-{variant}.eig"))
    }

    pub fn signature_path(&self, mesh_hash: &str, kernel_id: &str, k: usize, resolution: usize) -> PathBuf {
        self.root
            .join("signature")
            .join(format!("{mesh_hash}-{kernel_id}-k{k}-r{resolution}.sig"))
    }

    pub fn load_eigensystem(&self, mesh_hash: &str, variant: &str) -> Result<Option<EigenSystem>> {
        let path = self.eigen_path(mesh_hash, variant);
        match fs::read(&path) {
            Ok(bytes) => decode_eigensystem(&path, &bytes, mesh_hash, variant),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(e.into()),
        }
    }

    pub fn store_eigensystem(&self, mesh_hash: &str, variant: &str, es: &EigenSystem) -> Result<()> {
        write_atomic(&self.eigen_path(mesh_hash, variant), &encode_eigensystem(mesh_hash, variant, es))
    }

    pub fn load_signature(
        &self,
        mesh_hash: &str,
        kernel_id: &str,
        k: usize,
        resolution: usize,
    ) -> Result<Option<SignatureMatrix>> {
        let path = self.signature_path(mesh_hash, kernel_id, k, resolution);
        match fs::read(&path) {
            Ok(bytes) => decode_signature(&path, &bytes, mesh_hash, kernel_id, k, resolution),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(e.into()),
        }
    }

    pub fn store_signature(
        &self,
        mesh_hash: &str,
        kernel_id: &str,
        k: usize,
        sig: &SignatureMatrix,
    ) -> Result<()> {
        let path = self.signature_path(mesh_hash, kernel_id, k, sig.resolution());
        write_atomic(&path, &encode_signature(mesh_hash, kernel_id, k, sig))
    }
}
