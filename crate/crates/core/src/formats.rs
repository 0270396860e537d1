//! JSON file formats. Matrices are row-major lists of rows whose entries are
//! `[re, im]` pairs. Every parser validates sizes against [`MAX_DIM`] before
//! allocating anything derived from them and reports problems as
//! [`Error::Format`] or [`Error::Json`]; none of them panic.

use std::io;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::ser::{Formatter, PrettyFormatter};
use serde_json::Value;

use crate::channels::KrausChannel;
use crate::error::{Error, Result};
use crate::gcmps::{GeneralizedCmps, Statistics};
use crate::lindblad::Lindblad;
use crate::mps::MpsTensor;
use crate::numerics::{CMatrix, C64};
use crate::projectors::{Block, ProjectorCanonicalForm};

/// Largest bond (or Hilbert space) dimension accepted from a file.
pub const MAX_DIM: usize = 32;
/// Largest number of Kraus, jump, boundary or physical matrices in a file.
pub const MAX_OPERATORS: usize = 1024;

/// Serde form of a complex matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct JsonMatrix(pub Vec<Vec<[f64; 2]>>);

impl From<&CMatrix> for JsonMatrix {
    fn from(m: &CMatrix) -> Self {
        Self(
            m.row_iter()
                .map(|row| row.iter().map(|z| [z.re, z.im]).collect())
                .collect(),
        )
    }
}

impl JsonMatrix {
    /// Converts to a `rows × cols` matrix, rejecting ragged or non-finite data.
    pub fn to_matrix(&self, rows: usize, cols: usize, what: &str) -> Result<CMatrix> {
        if self.0.len() != rows {
            return Err(Error::Format(format!(
                "{what}: {} rows, expected {rows}",
                self.0.len()
            )));
        }
        let mut m = CMatrix::zeros(rows, cols);
        for (i, row) in self.0.iter().enumerate() {
            if row.len() != cols {
                return Err(Error::Format(format!(
                    "{what}: row {i} has {} entries, expected {cols}",
                    row.len()
                )));
            }
            for (j, &[r, im]) in row.iter().enumerate() {
                if !r.is_finite() || !im.is_finite() {
                    return Err(Error::Format(format!("{what}: entry ({i}, {j}) is not finite")));
                }
                m[(i, j)] = C64::new(r, im);
            }
        }
        Ok(m)
    }

    pub fn to_square(&self, n: usize, what: &str) -> Result<CMatrix> {
        self.to_matrix(n, n, what)
    }
}

fn check_dim(n: usize, what: &str) -> Result<usize> {
    if n == 0 || n > MAX_DIM {
        return Err(Error::Format(format!("{what} = {n} outside 1..={MAX_DIM}")));
    }
    Ok(n)
}

fn check_count(n: usize, what: &str) -> Result<()> {
    if n > MAX_OPERATORS {
        return Err(Error::Format(format!("{n} {what} exceed the limit of {MAX_OPERATORS}")));
    }
    Ok(())
}

fn square_list(list: &[JsonMatrix], n: usize, what: &str) -> Result<Vec<CMatrix>> {
    check_count(list.len(), what)?;
    list.iter()
        .enumerate()
        .map(|(i, m)| m.to_square(n, &format!("{what}[{i}]")))
        .collect()
}

/// Parses text to a JSON value; syntax errors carry line and column.
pub fn parse_value(text: &str) -> Result<Value> {
    Ok(serde_json::from_str(text)?)
}

fn from_value<T: DeserializeOwned>(value: Value) -> Result<T> {
    Ok(serde_json::from_value(value)?)
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ChannelFile {
    dim: usize,
    kraus: Vec<JsonMatrix>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LindbladFile {
    dim: usize,
    #[serde(rename = "H")]
    h: JsonMatrix,
    jumps: Vec<JsonMatrix>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BlockFile {
    #[serde(rename = "Dk")]
    dk: usize,
    mk: usize,
    sigma: JsonMatrix,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CanonicalFormFile {
    dim: usize,
    #[serde(rename = "U")]
    u: JsonMatrix,
    d0: usize,
    blocks: Vec<BlockFile>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TensorFile {
    d: usize,
    #[serde(rename = "D")]
    bond: usize,
    a: f64,
    matrices: Vec<JsonMatrix>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GcmpsFile {
    #[serde(rename = "K")]
    k: usize,
    boundary: Vec<JsonMatrix>,
    #[serde(rename = "H")]
    h: JsonMatrix,
    jumps: Vec<JsonMatrix>,
    /// One sign per species: `1` bosonic, `-1` fermionic.
    #[serde(default)]
    eta: Option<Vec<f64>>,
}

fn channel_from_value(v: Value) -> Result<KrausChannel> {
    let f: ChannelFile = from_value(v)?;
    let n = check_dim(f.dim, "dim")?;
    if f.kraus.is_empty() {
        return Err(Error::Format("kraus list is empty".into()));
    }
    KrausChannel::new(square_list(&f.kraus, n, "kraus")?)
}

pub fn parse_channel(text: &str) -> Result<KrausChannel> {
    channel_from_value(parse_value(text)?)
}

pub fn channel_to_value(ch: &KrausChannel) -> Value {
    serde_json::to_value(ChannelFile {
        dim: ch.dim,
        kraus: ch.kraus.iter().map(JsonMatrix::from).collect(),
    })
    .unwrap_or(Value::Null)
}

fn lindblad_from_value(v: Value) -> Result<Lindblad> {
    let f: LindbladFile = from_value(v)?;
    let n = check_dim(f.dim, "dim")?;
    Lindblad::new(f.h.to_square(n, "H")?, square_list(&f.jumps, n, "jumps")?)
}

pub fn parse_lindblad(text: &str) -> Result<Lindblad> {
    lindblad_from_value(parse_value(text)?)
}

pub fn lindblad_to_value(g: &Lindblad) -> Value {
    serde_json::to_value(LindbladFile {
        dim: g.dim,
        h: JsonMatrix::from(&g.hamiltonian),
        jumps: g.jumps.iter().map(JsonMatrix::from).collect(),
    })
    .unwrap_or(Value::Null)
}

fn canonical_form_from_value(v: Value) -> Result<ProjectorCanonicalForm> {
    let f: CanonicalFormFile = from_value(v)?;
    let n = check_dim(f.dim, "dim")?;
    if f.d0 > n {
        return Err(Error::Format(format!("d0 = {} exceeds dim = {n}", f.d0)));
    }
    check_count(f.blocks.len(), "blocks")?;
    let mut total = f.d0;
    let mut blocks = Vec::with_capacity(f.blocks.len());
    for (k, b) in f.blocks.iter().enumerate() {
        let dk = check_dim(b.dk, &format!("blocks[{k}].Dk"))?;
        let mk = check_dim(b.mk, &format!("blocks[{k}].mk"))?;
        total += dk * mk;
        if total > n {
            return Err(Error::Format(format!("block sizes exceed dim = {n}")));
        }
        blocks.push(Block {
            dk,
            mk,
            sigma: b.sigma.to_square(mk, &format!("blocks[{k}].sigma"))?,
        });
    }
    ProjectorCanonicalForm::new(f.u.to_square(n, "U")?, f.d0, blocks)
}

pub fn parse_canonical_form(text: &str) -> Result<ProjectorCanonicalForm> {
    canonical_form_from_value(parse_value(text)?)
}

pub fn canonical_form_to_value(cf: &ProjectorCanonicalForm) -> Value {
    serde_json::to_value(CanonicalFormFile {
        dim: cf.dim,
        u: JsonMatrix::from(&cf.basis_change),
        d0: cf.d0,
        blocks: cf
            .blocks
            .iter()
            .map(|b| BlockFile {
                dk: b.dk,
                mk: b.mk,
                sigma: JsonMatrix::from(&b.sigma),
            })
            .collect(),
    })
    .unwrap_or(Value::Null)
}

fn tensor_from_value(v: Value) -> Result<MpsTensor> {
    let f: TensorFile = from_value(v)?;
    let bond = check_dim(f.bond, "D")?;
    if f.d == 0 {
        return Err(Error::Format("d must be positive".into()));
    }
    if f.matrices.len() != f.d {
        return Err(Error::Format(format!(
            "{} matrices for physical dimension d = {}",
            f.matrices.len(),
            f.d
        )));
    }
    MpsTensor::new(square_list(&f.matrices, bond, "matrices")?, f.a)
}

pub fn parse_tensor(text: &str) -> Result<MpsTensor> {
    tensor_from_value(parse_value(text)?)
}

pub fn tensor_to_value(t: &MpsTensor) -> Value {
    serde_json::to_value(TensorFile {
        d: t.d,
        bond: t.bond_dim,
        a: t.spacing,
        matrices: t.matrices.iter().map(JsonMatrix::from).collect(),
    })
    .unwrap_or(Value::Null)
}

fn gcmps_from_value(v: Value) -> Result<GeneralizedCmps> {
    let f: GcmpsFile = from_value(v)?;
    if f.boundary.len() != f.k {
        return Err(Error::Format(format!(
            "K = {} but {} boundary operators",
            f.k,
            f.boundary.len()
        )));
    }
    let n = check_dim(f.h.0.len(), "H dimension")?;
    let h = f.h.to_square(n, "H")?;
    let boundary = square_list(&f.boundary, n, "boundary")?;
    let jumps = square_list(&f.jumps, n, "jumps")?;
    let statistics = match f.eta {
        None => vec![Statistics::Boson; jumps.len()],
        Some(signs) => {
            if signs.len() != jumps.len() {
                return Err(Error::Format(format!(
                    "{} eta signs for {} jumps",
                    signs.len(),
                    jumps.len()
                )));
            }
            signs
                .into_iter()
                .map(Statistics::from_sign)
                .collect::<Result<_>>()?
        }
    };
    GeneralizedCmps::with_statistics(boundary, h, jumps, statistics)
}

pub fn parse_gcmps(text: &str) -> Result<GeneralizedCmps> {
    gcmps_from_value(parse_value(text)?)
}

pub fn gcmps_to_value(g: &GeneralizedCmps) -> Value {
    serde_json::to_value(GcmpsFile {
        k: g.ancilla_dim(),
        boundary: g.boundary.iter().map(JsonMatrix::from).collect(),
        h: JsonMatrix::from(&g.hamiltonian),
        jumps: g.jumps.iter().map(JsonMatrix::from).collect(),
        eta: Some(g.statistics.iter().map(|s| s.sign()).collect()),
    })
    .unwrap_or(Value::Null)
}

/// A file accepted where either a channel or something convertible to one
/// is expected.
#[derive(Clone, Debug)]
pub enum InputFile {
    Channel(KrausChannel),
    Tensor(MpsTensor),
    CanonicalForm(ProjectorCanonicalForm),
    Lindblad(Lindblad),
    Gcmps(GeneralizedCmps),
}

impl InputFile {
    pub fn kind(&self) -> &'static str {
        match self {
            Self::Channel(_) => "channel",
            Self::Tensor(_) => "tensor",
            Self::CanonicalForm(_) => "canonical form",
            Self::Lindblad(_) => "lindblad",
            Self::Gcmps(_) => "gcmps",
        }
    }
}

/// Detects the file kind from its distinguishing key.
pub fn parse_any(text: &str) -> Result<InputFile> {
    let v = parse_value(text)?;
    let obj = v
        .as_object()
        .ok_or_else(|| Error::Format("top level must be a JSON object".into()))?;
    let has = |k: &str| obj.contains_key(k);
    if has("kraus") {
        channel_from_value(v).map(InputFile::Channel)
    } else if has("matrices") {
        tensor_from_value(v).map(InputFile::Tensor)
    } else if has("blocks") {
        canonical_form_from_value(v).map(InputFile::CanonicalForm)
    } else if has("boundary") {
        gcmps_from_value(v).map(InputFile::Gcmps)
    } else if has("jumps") {
        lindblad_from_value(v).map(InputFile::Lindblad)
    } else {
        Err(Error::Format(
            "unrecognized file: expected one of the keys kraus, matrices, blocks, boundary, jumps".into(),
        ))
    }
}

/// Pretty printer that writes every float with 17 significant digits, so
/// that equal outputs are byte-identical and no precision is lost.
pub struct ExactFloatFormatter<'a>(PrettyFormatter<'a>);

impl Default for ExactFloatFormatter<'_> {
    fn default() -> Self {
        Self(PrettyFormatter::with_indent(b"  "))
    }
}

fn write_exact<W: ?Sized + io::Write>(writer: &mut W, value: f64) -> io::Result<()> {
    if value.is_finite() {
        write!(writer, "{value:.16e}")
    } else {
        writer.write_all(b"null")
    }
}

impl Formatter for ExactFloatFormatter<'_> {
    fn write_f64<W: ?Sized + io::Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        write_exact(writer, value)
    }

    fn write_f32<W: ?Sized + io::Write>(&mut self, writer: &mut W, value: f32) -> io::Result<()> {
        write_exact(writer, value as f64)
    }

    fn begin_array<W: ?Sized + io::Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.0.begin_array(writer)
    }

    fn end_array<W: ?Sized + io::Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.0.end_array(writer)
    }

    fn begin_array_value<W: ?Sized + io::Write>(&mut self, writer: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_array_value(writer, first)
    }

    fn end_array_value<W: ?Sized + io::Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.0.end_array_value(writer)
    }

    fn begin_object<W: ?Sized + io::Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.0.begin_object(writer)
    }

    fn end_object<W: ?Sized + io::Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.0.end_object(writer)
    }

    fn begin_object_key<W: ?Sized + io::Write>(&mut self, writer: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_object_key(writer, first)
    }

    fn begin_object_value<W: ?Sized + io::Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.0.begin_object_value(writer)
    }

    fn end_object_value<W: ?Sized + io::Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.0.end_object_value(writer)
    }
}

/// Pretty JSON with 17-significant-digit floats and a trailing newline.
pub fn to_json_string<T: Serialize + ?Sized>(value: &T) -> Result<String> {
    let mut out = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut out, ExactFloatFormatter::default());
    value.serialize(&mut ser)?;
    out.push(b'\n');
    String::from_utf8(out).map_err(|e| Error::Format(e.to_string()))
}

struct CompactExactFormatter;

impl Formatter for CompactExactFormatter {
    fn write_f64<W: ?Sized + io::Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        write_exact(writer, value)
    }

    fn write_f32<W: ?Sized + io::Write>(&mut self, writer: &mut W, value: f32) -> io::Result<()> {
        write_exact(writer, value as f64)
    }
}

/// Single-line JSON with 17-significant-digit floats.
pub fn to_json_line<T: Serialize + ?Sized>(value: &T) -> Result<String> {
    let mut out = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut out, CompactExactFormatter);
    value.serialize(&mut ser)?;
    String::from_utf8(out).map_err(|e| Error::Format(e.to_string()))
}

/// Formats one float the way [`to_json_string`] does, for CSV cells.
pub fn format_float(value: f64) -> String {
    if value.is_finite() {
        format!("{value:.16e}")
    } else {
        "nan".into()
    }
}
