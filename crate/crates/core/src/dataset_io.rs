//! On-disk formats: depth PNGs, intrinsics JSON, annotation label PNG +
//! sidecar JSON, detection JSON, raw little-endian tensors and PLY export.
//!
//! Writers are byte-deterministic: JSON keys follow struct order and floats
//! use the shortest representation that round-trips an `f64`.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use image::{ImageBuffer, ImageReader, Luma};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{BoundingBox, CameraIntrinsics, DepthImage, Plane, PointCloud};
use crate::linalg::Vec3;
use crate::metrics::{Instance, InstanceSet, SegLabelMap};
use crate::ndt_ransac::{PlaneInstance, Rasterization};
use crate::nms::Detection;
use crate::rfa::{AsfWeights, Conv2d, RfaWeights};
use crate::scalar::Scalar;

fn map_image_err(path: &Path, e: image::ImageError) -> Error {
    match e {
        image::ImageError::IoError(io) => Error::io(path, io),
        other => Error::format(path, other.to_string()),
    }
}

fn read_u16_png(path: &Path) -> Result<(u32, u32, Vec<u16>)> {
    let reader = ImageReader::open(path).map_err(|e| Error::io(path, e))?;
    let img = reader
        .with_guessed_format()
        .map_err(|e| Error::io(path, e))?
        .decode()
        .map_err(|e| map_image_err(path, e))?;
    match img {
        image::DynamicImage::ImageLuma16(buf) => {
            let (w, h) = buf.dimensions();
            Ok((w, h, buf.into_raw()))
        }
        other => Err(Error::format(
            path,
            format!(
                "expected a 16-bit single-channel PNG, found {:?}",
                other.color()
            ),
        )),
    }
}

fn write_u16_png(path: &Path, width: u32, height: u32, data: Vec<u16>) -> Result<()> {
    let buf: ImageBuffer<Luma<u16>, Vec<u16>> = ImageBuffer::from_raw(width, height, data)
        .ok_or_else(|| Error::Shape(format!("buffer does not match {width}x{height}")))?;
    buf.save_with_format(path, image::ImageFormat::Png)
        .map_err(|e| map_image_err(path, e))
}

/// Decodes a 16-bit grayscale PNG of millimetre depths.
pub fn load_depth(path: impl AsRef<Path>) -> Result<DepthImage> {
    let path = path.as_ref();
    let (w, h, values) = read_u16_png(path)?;
    DepthImage::new(w, h, values)
}

pub fn save_depth(depth: &DepthImage, path: impl AsRef<Path>) -> Result<()> {
    write_u16_png(
        path.as_ref(),
        depth.width,
        depth.height,
        depth.values.clone(),
    )
}

fn read_json<D: for<'de> Deserialize<'de>>(path: &Path) -> Result<D> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_reader(BufReader::new(file)).map_err(|e| Error::format(path, e.to_string()))
}

fn write_json<S: Serialize>(path: &Path, value: &S) -> Result<()> {
    let mut text =
        serde_json::to_string_pretty(value).map_err(|e| Error::format(path, e.to_string()))?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct IntrinsicsJson {
    fx: f64,
    fy: f64,
    cx: f64,
    cy: f64,
    width: u32,
    height: u32,
}

/// Reads `{fx, fy, cx, cy, width, height}`. Malformed or invalid intrinsics
/// are configuration errors.
pub fn load_intrinsics<T: Scalar>(path: impl AsRef<Path>) -> Result<CameraIntrinsics<T>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let j: IntrinsicsJson = serde_json::from_str(&text)
        .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    CameraIntrinsics::new(
        T::lit(j.fx),
        T::lit(j.fy),
        T::lit(j.cx),
        T::lit(j.cy),
        j.width,
        j.height,
    )
}

pub fn save_intrinsics<T: Scalar>(
    intr: &CameraIntrinsics<T>,
    path: impl AsRef<Path>,
) -> Result<()> {
    write_json(
        path.as_ref(),
        &IntrinsicsJson {
            fx: intr.fx.as_f64(),
            fy: intr.fy.as_f64(),
            cx: intr.cx.as_f64(),
            cy: intr.cy.as_f64(),
            width: intr.width,
            height: intr.height,
        },
    )
}

/// Metadata of one labelled instance.
#[derive(Debug, Clone, PartialEq)]
pub struct AnnotatedInstance<T> {
    pub id: u32,
    pub plane: Plane<T>,
    pub bbox: BoundingBox<T>,
    pub area_px: usize,
    /// Confidence, for annotations that hold predictions.
    pub score: Option<T>,
}

/// In-memory form of an annotation file pair.
#[derive(Debug, Clone, PartialEq)]
pub struct Annotation<T> {
    pub labels: SegLabelMap,
    pub instances: Vec<AnnotatedInstance<T>>,
    pub source: Option<String>,
    pub intrinsics: Option<String>,
}

impl<T: Scalar> Annotation<T> {
    /// Pairs each label id with the plane of the instance it came from.
    pub fn from_rasterization(raster: &Rasterization, planes: &[PlaneInstance<T>]) -> Self {
        let instances = raster
            .sources
            .iter()
            .enumerate()
            .filter_map(|(i, &src)| {
                let id = i as u32 + 1;
                let mask = raster.labels.mask_of(id);
                Some(AnnotatedInstance {
                    id,
                    plane: planes[src].plane,
                    bbox: mask.bounding_box()?,
                    area_px: mask.count(),
                    score: None,
                })
            })
            .collect();
        Self {
            labels: raster.labels.clone(),
            instances,
            source: None,
            intrinsics: None,
        }
    }

    /// Instances as metric inputs; scores default to `1` when absent.
    pub fn instance_set(&self) -> InstanceSet<T> {
        InstanceSet::new(
            self.instances
                .iter()
                .map(|a| Instance {
                    mask: self.labels.mask_of(a.id),
                    bbox: a.bbox,
                    score: Some(a.score.unwrap_or(T::one())),
                })
                .collect(),
        )
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct SidecarInstance {
    id: u32,
    normal: [f64; 3],
    offset: f64,
    bbox: [f64; 4],
    area_px: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    score: Option<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Sidecar {
    width: u32,
    height: u32,
    #[serde(default)]
    source: Option<String>,
    #[serde(default)]
    intrinsics: Option<String>,
    instances: Vec<SidecarInstance>,
}

/// Sidecar path of a label PNG: same stem, `.json` extension.
pub fn sidecar_path(png: &Path) -> PathBuf {
    png.with_extension("json")
}

/// Writes `path` (16-bit label PNG) and its JSON sidecar.
pub fn save_annotation<T: Scalar>(ann: &Annotation<T>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let data = ann
        .labels
        .labels
        .iter()
        .map(|&l| {
            u16::try_from(l).map_err(|_| Error::Capacity(format!("label id {l} exceeds 65535")))
        })
        .collect::<Result<Vec<u16>>>()?;
    let sidecar = Sidecar {
        width: ann.labels.width,
        height: ann.labels.height,
        source: ann.source.clone(),
        intrinsics: ann.intrinsics.clone(),
        instances: ann
            .instances
            .iter()
            .map(|a| SidecarInstance {
                id: a.id,
                normal: a.plane.normal.to_array().map(|v| v.as_f64()),
                offset: a.plane.offset.as_f64(),
                bbox: a.bbox.to_array().map(|v| v.as_f64()),
                area_px: a.area_px,
                score: a.score.map(|s| s.as_f64()),
            })
            .collect(),
    };
    if sidecar.instances.iter().any(|i| i.id > u16::MAX as u32) {
        return Err(Error::Capacity("instance id exceeds 65535".into()));
    }
    write_u16_png(path, ann.labels.width, ann.labels.height, data)?;
    write_json(&sidecar_path(path), &sidecar)
}

/// Reads a label PNG and its sidecar, checking that they describe the same instances.
pub fn load_annotation<T: Scalar>(path: impl AsRef<Path>) -> Result<Annotation<T>> {
    let path = path.as_ref();
    let (w, h, data) = read_u16_png(path)?;
    let side_path = sidecar_path(path);
    let sidecar: Sidecar = read_json(&side_path)?;
    if (sidecar.width, sidecar.height) != (w, h) {
        return Err(Error::integrity(
            &side_path,
            format!(
                "sidecar says {}x{}, PNG is {w}x{h}",
                sidecar.width, sidecar.height
            ),
        ));
    }
    let labels = SegLabelMap::new(w, h, data.into_iter().map(u32::from).collect())?;

    let mut area = std::collections::BTreeMap::<u32, usize>::new();
    for &l in labels.labels.iter().filter(|&&l| l != 0) {
        *area.entry(l).or_default() += 1;
    }
    let mut seen = std::collections::BTreeSet::new();
    let mut instances = Vec::with_capacity(sidecar.instances.len());
    for s in sidecar.instances {
        if !seen.insert(s.id) {
            return Err(Error::integrity(
                &side_path,
                format!("id {} listed twice", s.id),
            ));
        }
        match area.get(&s.id) {
            None => {
                return Err(Error::integrity(
                    &side_path,
                    format!("id {} absent from label image", s.id),
                ));
            }
            Some(&a) if a != s.area_px => {
                return Err(Error::integrity(
                    &side_path,
                    format!(
                        "id {}: sidecar area {} but {} labelled pixels",
                        s.id, s.area_px, a
                    ),
                ));
            }
            _ => {}
        }
        let plane = Plane {
            normal: Vec3::from_array(s.normal.map(T::lit)),
            offset: T::lit(s.offset),
        };
        let bbox = BoundingBox::from_array(s.bbox.map(T::lit))
            .map_err(|e| Error::integrity(&side_path, format!("id {}: {e}", s.id)))?;
        instances.push(AnnotatedInstance {
            id: s.id,
            plane,
            bbox,
            area_px: s.area_px,
            score: s.score.map(T::lit),
        });
    }
    if let Some(missing) = area.keys().find(|id| !seen.contains(id)) {
        return Err(Error::integrity(
            &side_path,
            format!("id {missing} in label image but not in sidecar"),
        ));
    }
    Ok(Annotation {
        labels,
        instances,
        source: sidecar.source,
        intrinsics: sidecar.intrinsics,
    })
}

/// Detections sharing one coefficient length `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectionFile<T> {
    pub k: usize,
    pub width: Option<u32>,
    pub height: Option<u32>,
    pub detections: Vec<Detection<T>>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DetectionRecord {
    #[serde(rename = "box")]
    bbox: [f64; 4],
    score: f64,
    class: usize,
    coeffs: Vec<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct DetectionHeader {
    k: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    width: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    height: Option<u32>,
    detections: Vec<DetectionRecord>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum DetectionJson {
    Bare(Vec<DetectionRecord>),
    WithHeader(DetectionHeader),
}

/// Accepts both the header form and a bare array of records.
pub fn read_detections<T: Scalar>(path: impl AsRef<Path>) -> Result<DetectionFile<T>> {
    let path = path.as_ref();
    let parsed: DetectionJson = read_json(path)?;
    let (k, width, height, records) = match parsed {
        DetectionJson::Bare(r) => (r.first().map_or(0, |d| d.coeffs.len()), None, None, r),
        DetectionJson::WithHeader(h) => (h.k, h.width, h.height, h.detections),
    };
    let detections = records
        .into_iter()
        .enumerate()
        .map(|(i, r)| {
            if r.coeffs.len() != k {
                return Err(Error::format(
                    path,
                    format!(
                        "record {i} has {} coefficients, file declares k={k}",
                        r.coeffs.len()
                    ),
                ));
            }
            let bbox = BoundingBox::from_array(r.bbox.map(T::lit))
                .map_err(|e| Error::format(path, format!("record {i}: {e}")))?;
            Ok(Detection::new(
                bbox,
                T::lit(r.score),
                r.class,
                r.coeffs.into_iter().map(T::lit).collect(),
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(DetectionFile {
        k,
        width,
        height,
        detections,
    })
}

pub fn write_detections<T: Scalar>(file: &DetectionFile<T>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    if let Some(bad) = file
        .detections
        .iter()
        .position(|d| d.coeffs.len() != file.k)
    {
        return Err(Error::format(
            path,
            format!("record {bad} does not have k={} coefficients", file.k),
        ));
    }
    let header = DetectionHeader {
        k: file.k,
        width: file.width,
        height: file.height,
        detections: file
            .detections
            .iter()
            .map(|d| DetectionRecord {
                bbox: d.bbox.to_array().map(|v| v.as_f64()),
                score: d.score.as_f64(),
                class: d.class_id,
                coeffs: d.coeffs.iter().map(|c| c.as_f64()).collect(),
            })
            .collect(),
    };
    write_json(path, &header)
}

/// Magic prefix of every raw-tensor record.
pub const TENSOR_MAGIC: [u8; 4] = *b"PSRT";

/// Flat `f32` tensor with its shape.
///
/// A tensor file is a sequence of records: `"PSRT"`, `u32` rank, `u32` per
/// dimension, then the values as `f32`; all little-endian.
#[derive(Debug, Clone, PartialEq)]
pub struct RawTensor {
    pub shape: Vec<usize>,
    pub data: Vec<f32>,
}

impl RawTensor {
    pub fn new(shape: Vec<usize>, data: Vec<f32>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(Error::Shape(format!(
                "tensor shape {shape:?} needs {n} values, got {}",
                data.len()
            )));
        }
        Ok(Self { shape, data })
    }

    pub fn from_scalars<T: Scalar>(shape: Vec<usize>, data: &[T]) -> Result<Self> {
        Self::new(
            shape,
            data.iter()
                .map(|v| v.to_f32().unwrap_or(f32::NAN))
                .collect(),
        )
    }

    pub fn to_scalars<T: Scalar>(&self) -> Vec<T> {
        self.data
            .iter()
            .map(|&v| T::from_f32(v).unwrap_or_else(T::nan))
            .collect()
    }
}

pub fn write_tensors(path: impl AsRef<Path>, tensors: &[RawTensor]) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    for t in tensors {
        w.write_all(&TENSOR_MAGIC).map_err(io)?;
        w.write_u32::<LittleEndian>(t.shape.len() as u32)
            .map_err(io)?;
        for &d in &t.shape {
            let d = u32::try_from(d)
                .map_err(|_| Error::Capacity(format!("dimension {d} exceeds u32")))?;
            w.write_u32::<LittleEndian>(d).map_err(io)?;
        }
        for &v in &t.data {
            w.write_f32::<LittleEndian>(v).map_err(io)?;
        }
    }
    w.flush().map_err(io)
}

pub fn read_tensors(path: impl AsRef<Path>) -> Result<Vec<RawTensor>> {
    let path = path.as_ref();
    let mut bytes = Vec::new();
    File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    let mut cur = std::io::Cursor::new(bytes.as_slice());
    let truncated = |_| Error::format(path, "truncated tensor record");
    let mut out = Vec::new();
    while (cur.position() as usize) < bytes.len() {
        let mut magic = [0u8; 4];
        cur.read_exact(&mut magic).map_err(truncated)?;
        if magic != TENSOR_MAGIC {
            return Err(Error::format(path, "bad tensor magic"));
        }
        let rank = cur.read_u32::<LittleEndian>().map_err(truncated)? as usize;
        let shape = (0..rank)
            .map(|_| cur.read_u32::<LittleEndian>().map(|d| d as usize))
            .collect::<std::io::Result<Vec<_>>>()
            .map_err(truncated)?;
        let n = shape
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .ok_or_else(|| Error::format(path, "tensor too large"))?;
        let remaining = bytes.len() - cur.position() as usize;
        if n.checked_mul(4).is_none_or(|b| b > remaining) {
            return Err(Error::format(path, "truncated tensor data"));
        }
        let mut data = vec![0f32; n];
        cur.read_f32_into::<LittleEndian>(&mut data)
            .map_err(truncated)?;
        out.push(RawTensor { shape, data });
    }
    Ok(out)
}

fn conv_tensors<T: Scalar>(c: &Conv2d<T>) -> Result<[RawTensor; 2]> {
    Ok([
        RawTensor::from_scalars(
            vec![c.out_channels, c.in_channels, c.size, c.size],
            &c.weight,
        )?,
        RawTensor::from_scalars(vec![c.out_channels], &c.bias)?,
    ])
}

fn conv_from<T: Scalar>(w: &RawTensor, b: &RawTensor) -> Result<Conv2d<T>> {
    match (w.shape.as_slice(), b.shape.as_slice()) {
        (&[o, i, s, s2], &[ob]) if s == s2 && o == ob => {
            Conv2d::new(o, i, s, w.to_scalars(), b.to_scalars())
        }
        _ => Err(Error::Shape(format!(
            "unexpected kernel shapes {:?} / {:?}",
            w.shape, b.shape
        ))),
    }
}

/// Tensor order: per-ratio projection (weight, bias), ASF reduce, ASF spatial, output.
pub fn rfa_weights_to_tensors<T: Scalar>(w: &RfaWeights<T>) -> Result<Vec<RawTensor>> {
    let mut out = Vec::new();
    for c in w
        .projections
        .iter()
        .chain([&w.asf.reduce, &w.asf.spatial, &w.output])
    {
        out.extend(conv_tensors(c)?);
    }
    Ok(out)
}

pub fn rfa_weights_from_tensors<T: Scalar>(tensors: &[RawTensor]) -> Result<RfaWeights<T>> {
    if tensors.len() < 8 || tensors.len() % 2 != 0 {
        return Err(Error::Shape(format!(
            "{} tensors do not form an RFA weight set",
            tensors.len()
        )));
    }
    let convs = tensors
        .chunks_exact(2)
        .map(|p| conv_from(&p[0], &p[1]))
        .collect::<Result<Vec<Conv2d<T>>>>()?;
    let n = convs.len();
    let mut iter = convs.into_iter();
    let projections: Vec<_> = iter.by_ref().take(n - 3).collect();
    let reduce = iter.next().unwrap();
    let spatial = iter.next().unwrap();
    let output = iter.next().unwrap();
    Ok(RfaWeights {
        projections,
        asf: AsfWeights { reduce, spatial },
        output,
    })
}

/// Stable RGB palette for instance ids; id 0 is grey.
pub fn palette(id: u32) -> [u8; 3] {
    const COLORS: [[u8; 3]; 12] = [
        [230, 25, 75],
        [60, 180, 75],
        [0, 130, 200],
        [245, 130, 48],
        [145, 30, 180],
        [70, 240, 240],
        [240, 50, 230],
        [210, 245, 60],
        [250, 190, 212],
        [0, 128, 128],
        [170, 110, 40],
        [255, 225, 25],
    ];
    if id == 0 {
        [128, 128, 128]
    } else {
        COLORS[(id as usize - 1) % COLORS.len()]
    }
}

/// ASCII PLY of the cloud, each point coloured by the label of its source pixel.
pub fn write_ply<T: Scalar>(
    path: impl AsRef<Path>,
    cloud: &PointCloud<T>,
    labels: Option<&SegLabelMap>,
) -> Result<()> {
    let path = path.as_ref();
    if labels.is_some() && !cloud.has_provenance() {
        return Err(Error::Config(
            "colouring by label requires point provenance".into(),
        ));
    }
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    write!(
        w,
        "ply\nformat ascii 1.0\ncomment planeseg export\nelement vertex {}\n\
         property float x\nproperty float y\nproperty float z\n\
         property uchar red\nproperty uchar green\nproperty uchar blue\nend_header\n",
        cloud.len()
    )
    .map_err(io)?;
    for (i, p) in cloud.points.iter().enumerate() {
        let id = match labels {
            Some(l) => {
                let px = cloud.provenance[i];
                if px.row < l.height && px.col < l.width {
                    l.get(px.row, px.col)
                } else {
                    0
                }
            }
            None => 0,
        };
        let [r, g, b] = palette(id);
        writeln!(
            w,
            "{} {} {} {r} {g} {b}",
            p.x.to_f32().unwrap_or(f32::NAN),
            p.y.to_f32().unwrap_or(f32::NAN),
            p.z.to_f32().unwrap_or(f32::NAN)
        )
        .map_err(io)?;
    }
    w.flush().map_err(io)
}
