//! Trained-model file format.
//!
//! Layout (little-endian): magic `MILM`, version `u16 = 1`, a model-kind
//! tag `u8`, kind-specific hyperparameters as `u32` values, then each
//! parameter tensor in declaration order as `rows: u32, cols: u32` followed
//! by row-major `f32` data.

use std::io::{Read, Write};
use std::path::Path;

use super::{
    AbmilModel, AggregatorModel, BgapHead, Prototypes, TrainableModel, TransmilLiteModel,
};
use crate::nn::Matrix;
use crate::{Error, Result};

pub const MODEL_MAGIC: [u8; 4] = *b"MILM";
pub const MODEL_VERSION: u16 = 1;

const KIND_BGAP: u8 = 0;
const KIND_ABMIL: u8 = 1;
const KIND_TRANSMIL: u8 = 2;
const KIND_SIMPLESHOT: u8 = 3;

fn write_u32(buf: &mut Vec<u8>, v: usize) -> Result<()> {
    let v: u32 = v
        .try_into()
        .map_err(|_| Error::Format(format!("value {v} exceeds u32 in model file")))?;
    buf.extend_from_slice(&v.to_le_bytes());
    Ok(())
}

fn write_tensor(buf: &mut Vec<u8>, m: &Matrix) -> Result<()> {
    write_u32(buf, m.rows())?;
    write_u32(buf, m.cols())?;
    for v in m.data() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    Ok(())
}

struct ModelReader<R> {
    inner: R,
}

impl<R: Read> ModelReader<R> {
    fn u8(&mut self) -> Result<u8> {
        let mut b = [0u8; 1];
        self.inner
            .read_exact(&mut b)
            .map_err(|e| Error::Format(format!("model file truncated: {e}")))?;
        Ok(b[0])
    }

    fn u16(&mut self) -> Result<u16> {
        let mut b = [0u8; 2];
        self.inner
            .read_exact(&mut b)
            .map_err(|e| Error::Format(format!("model file truncated: {e}")))?;
        Ok(u16::from_le_bytes(b))
    }

    fn u32(&mut self) -> Result<usize> {
        let mut b = [0u8; 4];
        self.inner
            .read_exact(&mut b)
            .map_err(|e| Error::Format(format!("model file truncated: {e}")))?;
        Ok(u32::from_le_bytes(b) as usize)
    }

    fn tensor(&mut self) -> Result<Matrix> {
        let rows = self.u32()?;
        let cols = self.u32()?;
        let count = rows
            .checked_mul(cols)
            .ok_or_else(|| Error::Format("tensor shape overflow in model file".into()))?;
        let mut bytes = vec![0u8; count * 4];
        self.inner
            .read_exact(&mut bytes)
            .map_err(|e| Error::Format(format!("model file truncated reading tensor: {e}")))?;
        let data = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        Matrix::from_vec(rows, cols, data)
    }
}

fn params_blob<M: TrainableModel>(model: &M, buf: &mut Vec<u8>) -> Result<()> {
    for p in model.params() {
        write_tensor(buf, &p.value)?;
    }
    Ok(())
}

pub fn save_model(model: &AggregatorModel, path: &Path) -> Result<()> {
    let mut buf = Vec::new();
    buf.extend_from_slice(&MODEL_MAGIC);
    buf.extend_from_slice(&MODEL_VERSION.to_le_bytes());
    match model {
        AggregatorModel::Bgap(m) => {
            buf.push(KIND_BGAP);
            write_u32(&mut buf, m.d)?;
            write_u32(&mut buf, m.classes)?;
            params_blob(m, &mut buf)?;
        }
        AggregatorModel::Abmil(m) => {
            buf.push(KIND_ABMIL);
            write_u32(&mut buf, m.d)?;
            write_u32(&mut buf, m.classes)?;
            write_u32(&mut buf, m.hidden)?;
            params_blob(m, &mut buf)?;
        }
        AggregatorModel::Transmil(m) => {
            buf.push(KIND_TRANSMIL);
            write_u32(&mut buf, m.d)?;
            write_u32(&mut buf, m.classes)?;
            write_u32(&mut buf, m.model_dim)?;
            write_u32(&mut buf, m.layers)?;
            write_u32(&mut buf, m.heads)?;
            params_blob(m, &mut buf)?;
        }
        AggregatorModel::SimpleShot(p) => {
            buf.push(KIND_SIMPLESHOT);
            write_u32(&mut buf, p.classes())?;
            write_u32(&mut buf, p.d())?;
            buf.push(u8::from(p.normalized));
            write_tensor(&mut buf, p.matrix())?;
        }
    }
    let mut file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(&buf).map_err(|e| Error::io(path, e))
}

fn load_params<M: TrainableModel>(model: &mut M, r: &mut ModelReader<impl Read>) -> Result<()> {
    for i in 0..model.params().len() {
        let tensor = r.tensor()?;
        let expect = &model.params()[i].value;
        if tensor.rows() != expect.rows() || tensor.cols() != expect.cols() {
            return Err(Error::Format(format!(
                "tensor '{}' has shape {}x{}, expected {}x{}",
                model.params()[i].name,
                tensor.rows(),
                tensor.cols(),
                expect.rows(),
                expect.cols()
            )));
        }
        model.params_mut()[i].value = tensor;
    }
    Ok(())
}

pub fn load_model(path: &Path) -> Result<AggregatorModel> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = ModelReader {
        inner: std::io::BufReader::new(file),
    };
    let mut magic = [0u8; 4];
    r.inner
        .read_exact(&mut magic)
        .map_err(|e| Error::Format(format!("model file truncated: {e}")))?;
    if magic != MODEL_MAGIC {
        return Err(Error::Format(format!(
            "{}: bad magic {magic:?}, expected \"MILM\"",
            path.display()
        )));
    }
    let version = r.u16()?;
    if version != MODEL_VERSION {
        return Err(Error::Format(format!(
            "unsupported model version {version}"
        )));
    }
    let kind = r.u8()?;
    let model = match kind {
        KIND_BGAP => {
            let d = r.u32()?;
            let classes = r.u32()?;
            let mut m = BgapHead::new(d, classes, 0)?;
            load_params(&mut m, &mut r)?;
            AggregatorModel::Bgap(m)
        }
        KIND_ABMIL => {
            let d = r.u32()?;
            let classes = r.u32()?;
            let hidden = r.u32()?;
            let mut m = AbmilModel::with_hidden(d, classes, hidden, 0)?;
            load_params(&mut m, &mut r)?;
            AggregatorModel::Abmil(m)
        }
        KIND_TRANSMIL => {
            let d = r.u32()?;
            let classes = r.u32()?;
            let model_dim = r.u32()?;
            let layers = r.u32()?;
            let heads = r.u32()?;
            let mut m = TransmilLiteModel::with_dims(d, classes, model_dim, layers, heads, 0)?;
            load_params(&mut m, &mut r)?;
            AggregatorModel::Transmil(m)
        }
        KIND_SIMPLESHOT => {
            let classes = r.u32()?;
            let d = r.u32()?;
            let normalized = r.u8()? != 0;
            let matrix = r.tensor()?;
            if matrix.rows() != classes || matrix.cols() != d {
                return Err(Error::Format(format!(
                    "prototype matrix shape {}x{} disagrees with header {classes}x{d}",
                    matrix.rows(),
                    matrix.cols()
                )));
            }
            AggregatorModel::SimpleShot(Prototypes::from_parts(matrix, normalized))
        }
        other => {
            return Err(Error::Format(format!("unknown model kind tag {other}")));
        }
    };
    Ok(model)
}
