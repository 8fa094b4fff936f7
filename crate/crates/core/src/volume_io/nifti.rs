//! Single-file NIfTI-1 (`n+1`) reader and writer, optionally gzip-compressed.

use std::io::{Read, Write};
use std::path::Path;

use flate2::read::GzDecoder;
use flate2::write::GzEncoder;
use flate2::Compression;

use crate::error::{Error, Result};
use crate::grid::{
    diagonal_affine, Geometry, Grid, LabelGrid, ProbGrid, VoxelGrid, N_CLASSES,
};

pub const HEADER_SIZE: usize = 348;
/// Header plus the 4-byte extension flag.
pub const DATA_OFFSET: usize = 352;

const DT_UINT8: i16 = 2;
const DT_INT16: i16 = 4;
const DT_INT32: i16 = 8;
const DT_FLOAT32: i16 = 16;
const DT_FLOAT64: i16 = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GridKind {
    Intensity,
    Label,
    Probability,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ParsedGrid {
    Intensity(VoxelGrid),
    Label(LabelGrid),
    Probability(ProbGrid),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Endian {
    Little,
    Big,
}

struct HeaderReader<'a> {
    bytes: &'a [u8],
    endian: Endian,
}

impl HeaderReader<'_> {
    fn i16(&self, off: usize) -> i16 {
        let b = [self.bytes[off], self.bytes[off + 1]];
        match self.endian {
            Endian::Little => i16::from_le_bytes(b),
            Endian::Big => i16::from_be_bytes(b),
        }
    }

    fn f32(&self, off: usize) -> f32 {
        let b: [u8; 4] = self.bytes[off..off + 4].try_into().unwrap();
        match self.endian {
            Endian::Little => f32::from_le_bytes(b),
            Endian::Big => f32::from_be_bytes(b),
        }
    }
}

/// Raw header fields needed to decode the data section.
#[derive(Debug, Clone)]
struct Header {
    endian: Endian,
    dim: [i16; 8],
    datatype: i16,
    pixdim: [f32; 8],
    vox_offset: usize,
    scl_slope: f32,
    scl_inter: f32,
    qform_code: i16,
    sform_code: i16,
    quatern: [f32; 3],
    qoffset: [f32; 3],
    srow: [[f32; 4]; 3],
}

fn decompress_if_gzip(bytes: &[u8]) -> Result<std::borrow::Cow<'_, [u8]>> {
    if bytes.len() >= 2 && bytes[0] == 0x1f && bytes[1] == 0x8b {
        let mut out = Vec::new();
        GzDecoder::new(bytes)
            .read_to_end(&mut out)
            .map_err(|e| Error::Format(format!("gzip stream: {e}")))?;
        Ok(std::borrow::Cow::Owned(out))
    } else {
        Ok(std::borrow::Cow::Borrowed(bytes))
    }
}

fn parse_header(bytes: &[u8]) -> Result<Header> {
    if bytes.len() < HEADER_SIZE {
        return Err(Error::Truncated {
            expected: HEADER_SIZE,
            found: bytes.len(),
        });
    }
    match &bytes[344..348] {
        b"n+1\0" => {}
        b"ni1\0" => {
            return Err(Error::Unsupported(
                "two-file NIfTI (.hdr/.img) is not supported".into(),
            ))
        }
        other => {
            let sizeof_hdr = i32::from_le_bytes(bytes[0..4].try_into().unwrap());
            if sizeof_hdr == 540 || sizeof_hdr.swap_bytes() == 540 {
                return Err(Error::Unsupported("NIfTI-2 is not supported".into()));
            }
            return Err(Error::Format(format!("bad magic {:?}", other)));
        }
    }

    // dim[0] must lie in 1..=7 in the file's byte order.
    let le = i16::from_le_bytes([bytes[40], bytes[41]]);
    let endian = if (1..=7).contains(&le) {
        Endian::Little
    } else {
        let be = i16::from_be_bytes([bytes[40], bytes[41]]);
        if (1..=7).contains(&be) {
            Endian::Big
        } else {
            return Err(Error::Format(format!("implausible dim[0] = {le}")));
        }
    };
    let r = HeaderReader { bytes, endian };

    let mut dim = [0i16; 8];
    for (i, d) in dim.iter_mut().enumerate() {
        *d = r.i16(40 + 2 * i);
    }
    let mut pixdim = [0f32; 8];
    for (i, p) in pixdim.iter_mut().enumerate() {
        *p = r.f32(76 + 4 * i);
    }
    let vox_offset = r.f32(108);
    if !(vox_offset.is_finite() && vox_offset >= HEADER_SIZE as f32) {
        return Err(Error::Format(format!("invalid vox_offset {vox_offset}")));
    }
    let mut srow = [[0f32; 4]; 3];
    for (row, values) in srow.iter_mut().enumerate() {
        for (col, v) in values.iter_mut().enumerate() {
            *v = r.f32(280 + 16 * row + 4 * col);
        }
    }

    Ok(Header {
        endian,
        dim,
        datatype: r.i16(70),
        pixdim,
        vox_offset: vox_offset as usize,
        scl_slope: r.f32(112),
        scl_inter: r.f32(116),
        qform_code: r.i16(252),
        sform_code: r.i16(254),
        quatern: [r.f32(256), r.f32(260), r.f32(264)],
        qoffset: [r.f32(268), r.f32(272), r.f32(276)],
        srow,
    })
}

impl Header {
    fn spatial_dims(&self) -> Result<[usize; 3]> {
        let ndim = self.dim[0] as usize;
        let mut dims = [1usize; 3];
        for (i, d) in dims.iter_mut().enumerate() {
            if i < ndim {
                let v = self.dim[i + 1];
                if v < 1 {
                    return Err(Error::Format(format!("dim[{}] = {v}", i + 1)));
                }
                *d = v as usize;
            }
        }
        Ok(dims)
    }

    fn channels(&self) -> Result<usize> {
        let ndim = self.dim[0] as usize;
        let mut channels = 1usize;
        for i in 4..=ndim {
            let v = self.dim[i];
            if v < 1 {
                return Err(Error::Format(format!("dim[{i}] = {v}")));
            }
            channels *= v as usize;
        }
        Ok(channels)
    }

    fn spacing(&self) -> Result<[f64; 3]> {
        let mut spacing = [1.0; 3];
        for (i, s) in spacing.iter_mut().enumerate() {
            let p = self.pixdim[i + 1].abs() as f64;
            if !(p.is_finite() && p > 0.0) {
                return Err(Error::Validation(format!(
                    "pixdim[{}] = {} is not a positive spacing",
                    i + 1,
                    self.pixdim[i + 1]
                )));
            }
            *s = p;
        }
        Ok(spacing)
    }

    fn affine(&self, spacing: [f64; 3]) -> [[f64; 4]; 4] {
        if self.sform_code > 0 {
            let mut a = [[0.0; 4]; 4];
            for (row, values) in self.srow.iter().enumerate() {
                for (col, &v) in values.iter().enumerate() {
                    a[row][col] = v as f64;
                }
            }
            a[3] = [0.0, 0.0, 0.0, 1.0];
            a
        } else if self.qform_code > 0 {
            quaternion_affine(self.quatern, self.qoffset, spacing, self.pixdim[0])
        } else {
            diagonal_affine(spacing)
        }
    }

    fn bytes_per_value(&self) -> Result<usize> {
        match self.datatype {
            DT_UINT8 => Ok(1),
            DT_INT16 => Ok(2),
            DT_INT32 | DT_FLOAT32 => Ok(4),
            DT_FLOAT64 => Ok(8),
            other => Err(Error::Unsupported(format!("datatype code {other}"))),
        }
    }

    fn scaling(&self) -> Option<(f64, f64)> {
        let slope = self.scl_slope as f64;
        let inter = self.scl_inter as f64;
        if slope == 0.0 || !slope.is_finite() || (slope == 1.0 && inter == 0.0) {
            None
        } else {
            Some((slope, if inter.is_finite() { inter } else { 0.0 }))
        }
    }
}

fn quaternion_affine(q: [f32; 3], offset: [f32; 3], spacing: [f64; 3], qfac: f32) -> [[f64; 4]; 4] {
    let (b, c, d) = (q[0] as f64, q[1] as f64, q[2] as f64);
    let a = (1.0 - (b * b + c * c + d * d)).max(0.0).sqrt();
    let rot = [
        [a * a + b * b - c * c - d * d, 2.0 * (b * c - a * d), 2.0 * (b * d + a * c)],
        [2.0 * (b * c + a * d), a * a + c * c - b * b - d * d, 2.0 * (c * d - a * b)],
        [2.0 * (b * d - a * c), 2.0 * (c * d + a * b), a * a + d * d - c * c - b * b],
    ];
    let qfac = if qfac < 0.0 { -1.0 } else { 1.0 };
    let scale = [spacing[0], spacing[1], spacing[2] * qfac];
    let mut affine = [[0.0; 4]; 4];
    for row in 0..3 {
        for col in 0..3 {
            affine[row][col] = rot[row][col] * scale[col];
        }
        affine[row][3] = offset[row] as f64;
    }
    affine[3] = [0.0, 0.0, 0.0, 1.0];
    affine
}

fn decode_values(header: &Header, bytes: &[u8], count: usize) -> Result<Vec<f64>> {
    let width = header.bytes_per_value()?;
    let start = header.vox_offset;
    let needed = start + count * width;
    if bytes.len() < needed {
        return Err(Error::Truncated {
            expected: needed,
            found: bytes.len(),
        });
    }
    let raw = &bytes[start..needed];
    let big = header.endian == Endian::Big;
    macro_rules! decode {
        ($ty:ty, $n:expr) => {
            raw.chunks_exact($n)
                .map(|c| {
                    let arr: [u8; $n] = c.try_into().unwrap();
                    (if big {
                        <$ty>::from_be_bytes(arr)
                    } else {
                        <$ty>::from_le_bytes(arr)
                    }) as f64
                })
                .collect::<Vec<f64>>()
        };
    }
    let mut values = match header.datatype {
        DT_UINT8 => raw.iter().map(|&b| b as f64).collect(),
        DT_INT16 => decode!(i16, 2),
        DT_INT32 => decode!(i32, 4),
        DT_FLOAT32 => decode!(f32, 4),
        DT_FLOAT64 => decode!(f64, 8),
        other => return Err(Error::Unsupported(format!("datatype code {other}"))),
    };
    if let Some((slope, inter)) = header.scaling() {
        for v in values.iter_mut() {
            *v = *v * slope + inter;
        }
    }
    Ok(values)
}

/// Parse a NIfTI-1 byte stream (plain or gzip) into the requested grid kind.
pub fn parse_nifti(bytes: &[u8], kind: GridKind) -> Result<ParsedGrid> {
    let bytes = decompress_if_gzip(bytes)?;
    let header = parse_header(&bytes)?;
    let dims = header.spatial_dims()?;
    let channels = header.channels()?;
    let spacing = header.spacing()?;
    let geometry = Geometry::new(dims, spacing, header.affine(spacing))?;
    let n = geometry.len();

    match kind {
        GridKind::Intensity => {
            if channels != 1 {
                return Err(Error::Unsupported(format!(
                    "intensity volume with {channels} channels"
                )));
            }
            let values = decode_values(&header, &bytes, n)?;
            let data = values.into_iter().map(|v| v as f32).collect();
            Ok(ParsedGrid::Intensity(Grid::new(geometry, data)?))
        }
        GridKind::Label => {
            if channels != 1 {
                return Err(Error::Unsupported(format!(
                    "label volume with {channels} channels"
                )));
            }
            let values = decode_values(&header, &bytes, n)?;
            let mut data = Vec::with_capacity(n);
            for (i, v) in values.into_iter().enumerate() {
                if v.fract() != 0.0 || !(0.0..=3.0).contains(&v) {
                    return Err(Error::Validation(format!(
                        "label value {v} at voxel {:?} outside {{0,1,2,3}}",
                        geometry.coords(i)
                    )));
                }
                data.push(v as u8);
            }
            Ok(ParsedGrid::Label(Grid::new(geometry, data)?))
        }
        GridKind::Probability => {
            if channels != N_CLASSES {
                return Err(Error::Validation(format!(
                    "probability volume must have {N_CLASSES} channels, found {channels}"
                )));
            }
            let values = decode_values(&header, &bytes, n * N_CLASSES)?;
            let data = (0..n)
                .map(|i| std::array::from_fn(|c| values[c * n + i] as f32))
                .collect();
            Ok(ParsedGrid::Probability(Grid::new(geometry, data)?))
        }
    }
}

pub fn parse_intensity(bytes: &[u8]) -> Result<VoxelGrid> {
    match parse_nifti(bytes, GridKind::Intensity)? {
        ParsedGrid::Intensity(g) => Ok(g),
        _ => unreachable!(),
    }
}

pub fn parse_labels(bytes: &[u8]) -> Result<LabelGrid> {
    match parse_nifti(bytes, GridKind::Label)? {
        ParsedGrid::Label(g) => Ok(g),
        _ => unreachable!(),
    }
}

pub fn parse_probabilities(bytes: &[u8]) -> Result<ProbGrid> {
    match parse_nifti(bytes, GridKind::Probability)? {
        ParsedGrid::Probability(g) => Ok(g),
        _ => unreachable!(),
    }
}

/// Grids that can be serialized as NIfTI-1.
pub trait ToNifti {
    fn nifti_geometry(&self) -> &Geometry;
    fn nifti_channels(&self) -> usize;
    fn nifti_datatype(&self) -> (i16, i16);
    fn write_values(&self, out: &mut Vec<u8>);
}

impl ToNifti for VoxelGrid {
    fn nifti_geometry(&self) -> &Geometry {
        self.geometry()
    }
    fn nifti_channels(&self) -> usize {
        1
    }
    fn nifti_datatype(&self) -> (i16, i16) {
        (DT_FLOAT32, 32)
    }
    fn write_values(&self, out: &mut Vec<u8>) {
        for v in self.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
}

impl ToNifti for LabelGrid {
    fn nifti_geometry(&self) -> &Geometry {
        self.geometry()
    }
    fn nifti_channels(&self) -> usize {
        1
    }
    fn nifti_datatype(&self) -> (i16, i16) {
        (DT_UINT8, 8)
    }
    fn write_values(&self, out: &mut Vec<u8>) {
        out.extend_from_slice(self.data());
    }
}

impl ToNifti for ProbGrid {
    fn nifti_geometry(&self) -> &Geometry {
        self.geometry()
    }
    fn nifti_channels(&self) -> usize {
        N_CLASSES
    }
    fn nifti_datatype(&self) -> (i16, i16) {
        (DT_FLOAT32, 32)
    }
    fn write_values(&self, out: &mut Vec<u8>) {
        for c in 0..N_CLASSES {
            for p in self.data() {
                out.extend_from_slice(&p[c].to_le_bytes());
            }
        }
    }
}

/// Integer-valued map (e.g. connected-component ids) stored as int32.
pub struct IntegerMap<'a> {
    pub geometry: &'a Geometry,
    pub values: &'a [u32],
}

impl ToNifti for IntegerMap<'_> {
    fn nifti_geometry(&self) -> &Geometry {
        self.geometry
    }
    fn nifti_channels(&self) -> usize {
        1
    }
    fn nifti_datatype(&self) -> (i16, i16) {
        (DT_INT32, 32)
    }
    fn write_values(&self, out: &mut Vec<u8>) {
        for &v in self.values {
            out.extend_from_slice(&(v as i32).to_le_bytes());
        }
    }
}

fn header_bytes<G: ToNifti + ?Sized>(grid: &G) -> Vec<u8> {
    let geometry = grid.nifti_geometry();
    let channels = grid.nifti_channels();
    let (datatype, bitpix) = grid.nifti_datatype();
    let mut h = vec![0u8; DATA_OFFSET];
    let put_i16 = |h: &mut Vec<u8>, off: usize, v: i16| h[off..off + 2].copy_from_slice(&v.to_le_bytes());
    let put_f32 = |h: &mut Vec<u8>, off: usize, v: f32| h[off..off + 4].copy_from_slice(&v.to_le_bytes());

    h[0..4].copy_from_slice(&(HEADER_SIZE as i32).to_le_bytes());
    h[38] = b'r';
    let ndim: i16 = if channels > 1 { 4 } else { 3 };
    let dims = [
        ndim,
        geometry.dims[0] as i16,
        geometry.dims[1] as i16,
        geometry.dims[2] as i16,
        channels as i16,
        1,
        1,
        1,
    ];
    for (i, d) in dims.iter().enumerate() {
        put_i16(&mut h, 40 + 2 * i, *d);
    }
    put_i16(&mut h, 70, datatype);
    put_i16(&mut h, 72, bitpix);
    let pixdim = [
        1.0f32,
        geometry.spacing[0] as f32,
        geometry.spacing[1] as f32,
        geometry.spacing[2] as f32,
        1.0,
        1.0,
        1.0,
        1.0,
    ];
    for (i, p) in pixdim.iter().enumerate() {
        put_f32(&mut h, 76 + 4 * i, *p);
    }
    put_f32(&mut h, 108, DATA_OFFSET as f32);
    put_f32(&mut h, 112, 1.0);
    put_f32(&mut h, 116, 0.0);
    // millimetres, seconds
    h[123] = 2 | 8;
    put_i16(&mut h, 252, 0);
    put_i16(&mut h, 254, 1);
    for row in 0..3 {
        for col in 0..4 {
            put_f32(&mut h, 280 + 16 * row + 4 * col, geometry.affine[row][col] as f32);
        }
    }
    h[344..348].copy_from_slice(b"n+1\0");
    h
}

/// Serialize to NIfTI-1: float32 for intensities and probabilities, uint8 for labels.
pub fn write_nifti<G: ToNifti + ?Sized>(grid: &G, gzip: bool) -> Vec<u8> {
    let mut out = header_bytes(grid);
    grid.write_values(&mut out);
    if gzip {
        let mut encoder = GzEncoder::new(Vec::new(), Compression::default());
        encoder.write_all(&out).expect("in-memory gzip write");
        encoder.finish().expect("in-memory gzip finish")
    } else {
        out
    }
}

pub fn read_file(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

/// Writes `grid` to `path`, compressing when the name ends in `.gz`.
pub fn save<G: ToNifti + ?Sized>(grid: &G, path: &Path) -> Result<()> {
    let gzip = path.extension().is_some_and(|e| e == "gz");
    std::fs::write(path, write_nifti(grid, gzip)).map_err(|e| Error::io(path, e))
}

pub fn load_intensity(path: &Path) -> Result<VoxelGrid> {
    parse_intensity(&read_file(path)?)
}

pub fn load_labels(path: &Path) -> Result<LabelGrid> {
    parse_labels(&read_file(path)?)
}

pub fn load_probabilities(path: &Path) -> Result<ProbGrid> {
    parse_probabilities(&read_file(path)?)
}
