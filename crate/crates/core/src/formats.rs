//! Binary and text file formats.
//!
//! All binary formats start with a four-byte ASCII magic and store numbers
//! little-endian:
//!
//! * `MLP1`: u32 transition count T, then T records of
//!   (u32 in, u32 out, out·in f32 row-major weights, out f32 biases)
//! * `BVM1`: u32 rows, u32 bits, rows·ceil(bits/64) u64 words
//! * `DMX1`: u32 rows, u32 cols, rows·cols f64 row-major
//! * `SVM1`: u32 d, f64 bias, d f64 weights, f64 C

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::bitvec::{words_for, BitMatrix};
use crate::error::{format_err, Error, Result};
use crate::matrix::Matrix;
use crate::net::MlpNetwork;
use crate::spectral::Partition;
use crate::svm::{SvmModel, TrainMeta};

const MLP_MAGIC: &[u8; 4] = b"MLP1";
const BVM_MAGIC: &[u8; 4] = b"BVM1";
const DMX_MAGIC: &[u8; 4] = b"DMX1";
const SVM_MAGIC: &[u8; 4] = b"SVM1";

struct Reader<R> {
    inner: R,
    format: &'static str,
}

impl<R: Read> Reader<R> {
    fn new(inner: R, format: &'static str, magic: &[u8; 4]) -> Result<Self> {
        let mut r = Reader { inner, format };
        let mut got = [0u8; 4];
        r.fill(&mut got)?;
        if &got != magic {
            return Err(format_err(format, format!("bad magic {got:?}")));
        }
        Ok(r)
    }

    fn fill(&mut self, buf: &mut [u8]) -> Result<()> {
        self.inner.read_exact(buf).map_err(|e| match e.kind() {
            io::ErrorKind::UnexpectedEof => format_err(self.format, "truncated"),
            _ => Error::Io(e),
        })
    }

    fn u32(&mut self) -> Result<u32> {
        let mut b = [0u8; 4];
        self.fill(&mut b)?;
        Ok(u32::from_le_bytes(b))
    }

    fn u64(&mut self) -> Result<u64> {
        let mut b = [0u8; 8];
        self.fill(&mut b)?;
        Ok(u64::from_le_bytes(b))
    }

    fn f32(&mut self) -> Result<f32> {
        let mut b = [0u8; 4];
        self.fill(&mut b)?;
        Ok(f32::from_le_bytes(b))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_bits(self.u64()?))
    }

    fn finish(mut self) -> Result<()> {
        let mut extra = [0u8; 1];
        match self.inner.read(&mut extra)? {
            0 => Ok(()),
            _ => Err(format_err(self.format, "trailing bytes after payload")),
        }
    }
}

fn to_u32(v: usize, what: &str, format: &'static str) -> Result<u32> {
    u32::try_from(v).map_err(|_| format_err(format, format!("{what} {v} exceeds u32")))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

fn open(path: &Path) -> Result<BufReader<File>> {
    Ok(BufReader::new(File::open(path)?))
}

/// Weights are stored as f32, so a written network reads back rounded to
/// single precision.
pub fn write_mlp<W: Write>(net: &MlpNetwork, mut w: W) -> Result<()> {
    w.write_all(MLP_MAGIC)?;
    w.write_all(&to_u32(net.weights().len(), "layer count", "MLP1")?.to_le_bytes())?;
    for (weights, biases) in net.weights().iter().zip(net.biases()) {
        w.write_all(&to_u32(weights.cols(), "input width", "MLP1")?.to_le_bytes())?;
        w.write_all(&to_u32(weights.rows(), "output width", "MLP1")?.to_le_bytes())?;
        for &v in weights.as_slice() {
            w.write_all(&(v as f32).to_le_bytes())?;
        }
        for &v in biases {
            w.write_all(&(v as f32).to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_mlp<R: Read>(r: R) -> Result<MlpNetwork> {
    let mut r = Reader::new(r, "MLP1", MLP_MAGIC)?;
    let t = r.u32()? as usize;
    if t == 0 {
        return Err(format_err("MLP1", "no layers"));
    }
    let mut dims = Vec::with_capacity(t + 1);
    let mut weights = Vec::with_capacity(t);
    let mut biases = Vec::with_capacity(t);
    for layer in 0..t {
        let fan_in = r.u32()? as usize;
        let fan_out = r.u32()? as usize;
        match dims.last() {
            None => dims.push(fan_in),
            Some(&prev) if prev != fan_in => {
                return Err(format_err(
                    "MLP1",
                    format!("layer {layer} takes {fan_in} inputs but the previous layer emits {prev}"),
                ))
            }
            Some(_) => {}
        }
        dims.push(fan_out);
        let mut data = Vec::with_capacity(fan_in * fan_out);
        for _ in 0..fan_in * fan_out {
            data.push(f64::from(r.f32()?));
        }
        weights.push(Matrix::from_vec(fan_out, fan_in, data)?);
        biases.push((0..fan_out).map(|_| r.f32().map(f64::from)).collect::<Result<Vec<_>>>()?);
    }
    r.finish()?;
    MlpNetwork::new(dims, weights, biases).map_err(|e| format_err("MLP1", e.to_string()))
}

pub fn write_bvm<W: Write>(bits: &BitMatrix, mut w: W) -> Result<()> {
    w.write_all(BVM_MAGIC)?;
    w.write_all(&to_u32(bits.n_rows(), "row count", "BVM1")?.to_le_bytes())?;
    w.write_all(&to_u32(bits.n_bits(), "bit count", "BVM1")?.to_le_bytes())?;
    for &word in bits.words() {
        w.write_all(&word.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_bvm<R: Read>(r: R) -> Result<BitMatrix> {
    let mut r = Reader::new(r, "BVM1", BVM_MAGIC)?;
    let n_rows = r.u32()? as usize;
    let n_bits = r.u32()? as usize;
    let count = n_rows * words_for(n_bits);
    let words = (0..count).map(|_| r.u64()).collect::<Result<Vec<_>>>()?;
    r.finish()?;
    BitMatrix::from_words(n_rows, n_bits, words).map_err(|e| format_err("BVM1", e.to_string()))
}

pub fn write_dmx<W: Write>(m: &Matrix, mut w: W) -> Result<()> {
    w.write_all(DMX_MAGIC)?;
    w.write_all(&to_u32(m.rows(), "row count", "DMX1")?.to_le_bytes())?;
    w.write_all(&to_u32(m.cols(), "column count", "DMX1")?.to_le_bytes())?;
    for &v in m.as_slice() {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_dmx<R: Read>(r: R) -> Result<Matrix> {
    let mut r = Reader::new(r, "DMX1", DMX_MAGIC)?;
    let rows = r.u32()? as usize;
    let cols = r.u32()? as usize;
    let data = (0..rows * cols).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
    r.finish()?;
    Matrix::from_vec(rows, cols, data)
}

pub fn write_svm<W: Write>(model: &SvmModel, mut w: W) -> Result<()> {
    w.write_all(SVM_MAGIC)?;
    w.write_all(&to_u32(model.dim(), "dimension", "SVM1")?.to_le_bytes())?;
    w.write_all(&model.b.to_le_bytes())?;
    for &v in &model.w {
        w.write_all(&v.to_le_bytes())?;
    }
    w.write_all(&model.c.to_le_bytes())?;
    w.flush()?;
    Ok(())
}

/// Training metadata is not part of the format and reads back empty.
pub fn read_svm<R: Read>(r: R) -> Result<SvmModel> {
    let mut r = Reader::new(r, "SVM1", SVM_MAGIC)?;
    let d = r.u32()? as usize;
    let b = r.f64()?;
    let w = (0..d).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
    let c = r.f64()?;
    r.finish()?;
    Ok(SvmModel {
        w,
        b,
        c,
        meta: TrainMeta::default(),
    })
}

macro_rules! path_io {
    ($save:ident, $load:ident, $write:ident, $read:ident, $ty:ty) => {
        pub fn $save(value: &$ty, path: impl AsRef<Path>) -> Result<()> {
            let path = path.as_ref();
            $write(value, create(path)?).map_err(|e| e.with_context(path.display().to_string()))
        }

        pub fn $load(path: impl AsRef<Path>) -> Result<$ty> {
            let path = path.as_ref();
            open(path)
                .and_then($read)
                .map_err(|e| e.with_context(path.display().to_string()))
        }
    };
}

path_io!(save_mlp, load_mlp, write_mlp, read_mlp, MlpNetwork);
path_io!(save_bvm, load_bvm, write_bvm, read_bvm, BitMatrix);
path_io!(save_dmx, load_dmx, write_dmx, read_dmx, Matrix);
path_io!(save_svm, load_svm, write_svm, read_svm, SvmModel);

/// C `printf("%.17g")` formatting.
pub fn format_g17(v: f64) -> String {
    const PRECISION: i32 = 17;
    if v.is_nan() {
        return "nan".into();
    }
    if v.is_infinite() {
        return if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if v == 0.0 {
        return if v.is_sign_negative() { "-0".into() } else { "0".into() };
    }
    let sci = format!("{:.*e}", (PRECISION - 1) as usize, v);
    let (mantissa, exp) = sci.split_once('e').unwrap();
    let exp: i32 = exp.parse().unwrap();
    if !(-4..PRECISION).contains(&exp) {
        let mantissa = trim_fraction(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{mantissa}e{sign}{:02}", exp.abs())
    } else {
        let fixed = format!("{:.*}", (PRECISION - 1 - exp) as usize, v);
        trim_fraction(&fixed).to_string()
    }
}

fn trim_fraction(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

pub fn write_matrix_csv<W: Write>(m: &Matrix, mut w: W) -> Result<()> {
    for row in m.row_iter() {
        let line: Vec<String> = row.iter().map(|&v| format_g17(v)).collect();
        writeln!(w, "{}", line.join(","))?;
    }
    w.flush()?;
    Ok(())
}

/// Binary greyscale heatmap; `[min, max]` maps linearly onto `[0, 255]`
/// and a constant matrix is drawn mid-grey.
pub fn write_pgm<W: Write>(m: &Matrix, mut w: W) -> Result<()> {
    write!(w, "P5\n{} {}\n255\n", m.cols(), m.rows())?;
    let (lo, hi) = m
        .as_slice()
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let pixels: Vec<u8> = m
        .as_slice()
        .iter()
        .map(|&v| {
            if hi > lo {
                ((v - lo) / (hi - lo) * 255.0).round().clamp(0.0, 255.0) as u8
            } else {
                128
            }
        })
        .collect();
    w.write_all(&pixels)?;
    w.flush()?;
    Ok(())
}

pub fn write_partition_csv<W: Write>(p: &Partition, mut w: W) -> Result<()> {
    writeln!(w, "vertex_index,cluster_id")?;
    for (i, c) in p.assignment.iter().enumerate() {
        writeln!(w, "{i},{c}")?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_scores_csv<W: Write>(scores: &[f64], mut w: W) -> Result<()> {
    writeln!(w, "feature_index,score")?;
    for (i, &s) in scores.iter().enumerate() {
        writeln!(w, "{i},{}", format_g17(s))?;
    }
    w.flush()?;
    Ok(())
}

/// One index per line.
pub fn write_index_list<W: Write>(indices: &[usize], mut w: W) -> Result<()> {
    for i in indices {
        writeln!(w, "{i}")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_index_list<R: Read>(r: R) -> Result<Vec<usize>> {
    let mut text = String::new();
    BufReader::new(r).read_to_string(&mut text)?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(n, l)| {
            l.trim()
                .parse()
                .map_err(|_| Error::Data(format!("line {}: not an index: {l:?}", n + 1)))
        })
        .collect()
}

/// Writes `contents` produced by `f` to `path`, attaching the path to errors.
pub fn write_file(path: impl AsRef<Path>, f: impl FnOnce(&mut BufWriter<File>) -> Result<()>) -> Result<()> {
    let path = path.as_ref();
    let mut w = create(path).map_err(|e| e.with_context(path.display().to_string()))?;
    f(&mut w).map_err(|e| e.with_context(path.display().to_string()))
}

pub fn read_file<T>(path: impl AsRef<Path>, f: impl FnOnce(BufReader<File>) -> Result<T>) -> Result<T> {
    let path = path.as_ref();
    open(path)
        .and_then(f)
        .map_err(|e| e.with_context(path.display().to_string()))
}
