//! Analytic initial-data generators with known ADM charges and decay, and
//! the AFID1 field container for round-tripping datasets and spinor fields.
//!
//! The puncture generators carry a `core_radius` parameter: the radial
//! profile 1/r is replaced by 1/sqrt(r^2 + a^2), which leaves the ADM
//! charges and all decay rates untouched but caps the fields inside the
//! core so the data is smooth and resolvable on the grid (the core ball
//! plays the role of the compact set that the asymptotic-flatness
//! conditions say nothing about).

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;
use std::sync::Arc;

use num_complex::Complex64;

use crate::error::{CurvError, Result};
use crate::geometry::{DecayBounds, InitialDataSet, Provenance};
use crate::grid::{CField, Field, Grid};

const DELTA: [f64; 6] = [1.0, 0.0, 0.0, 1.0, 0.0, 1.0];

/// Euclidean data: g = delta, h = 0.
pub fn flat(grid: &Arc<Grid>) -> InitialDataSet {
    InitialDataSet {
        grid: grid.clone(),
        g: Field::from_fn(grid, 6, |_, c| DELTA[c]),
        h: Field::zeros(grid, 6),
        provenance: Provenance {
            generator: "flat".into(),
            params: BTreeMap::new(),
            decay_exempt: false,
        },
    }
}

/// Radial profile equal to 1/r for r >= core, blended to an even C^4
/// polynomial inside so the fields stay smooth and bounded through the
/// origin. The data is exactly unmodified outside the core ball.
#[inline]
pub fn capped_inv_r(r: f64, core: f64) -> f64 {
    if core <= 0.0 || r >= core {
        return 1.0 / r;
    }
    let t2 = (r / core) * (r / core);
    // matches 1/t with four derivatives at t = 1
    let v = (315.0 + t2 * (-420.0 + t2 * (378.0 + t2 * (-180.0 + t2 * 35.0)))) / 128.0;
    v / core
}

/// Time-symmetric Schwarzschild slice in isotropic coordinates:
/// g = (1 + m/2r)^4 delta, h = 0, with the core-capped radial profile.
pub fn schwarzschild_isotropic(
    grid: &Arc<Grid>,
    m: f64,
    core_radius: f64,
) -> Result<InitialDataSet> {
    if m < 0.0 {
        return Err(CurvError::InvalidParameter(format!(
            "mass must be nonnegative, got {m}"
        )));
    }
    let g = Field::from_fn(grid, 6, |node, c| {
        let x = grid.coords(node);
        let r = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        let phi = 1.0 + 0.5 * m * capped_inv_r(r, core_radius);
        phi.powi(4) * DELTA[c]
    });
    let mut params = BTreeMap::new();
    params.insert("m".into(), m);
    params.insert("core_radius".into(), core_radius);
    Ok(InitialDataSet {
        grid: grid.clone(),
        g,
        h: Field::zeros(grid, 6),
        provenance: Provenance {
            generator: "schwarzschild".into(),
            params,
            decay_exempt: false,
        },
    })
}

/// Conformally flat data with the Bowen-York momentum solution for linear
/// momentum `p`: h is trace-free and the ADM momentum equals `p` exactly
/// in the infinite-radius limit. The conformal factor uses `m_conf` and
/// does not solve the Hamiltonian constraint; the violation shows up as an
/// effective matter term in the curvature expression and is reported as a
/// diagnostic.
pub fn bowen_york(
    grid: &Arc<Grid>,
    p: [f64; 3],
    m_conf: f64,
    core_radius: f64,
) -> Result<InitialDataSet> {
    if m_conf < 0.0 {
        return Err(CurvError::InvalidParameter(format!(
            "conformal mass must be nonnegative, got {m_conf}"
        )));
    }
    let g = Field::from_fn(grid, 6, |node, c| {
        let x = grid.coords(node);
        let r = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        let phi = 1.0 + 0.5 * m_conf * capped_inv_r(r, core_radius);
        phi.powi(4) * DELTA[c]
    });
    let h = Field::from_fn(grid, 6, |node, comp| {
        let x = grid.coords(node);
        let r = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        if r < 1e-12 {
            return 0.0;
        }
        let n = [x[0] / r, x[1] / r, x[2] / r];
        let pn = p[0] * n[0] + p[1] * n[1] + p[2] * n[2];
        // exact Bowen-York amplitude outside the core; tapered to zero at
        // the origin inside it (the radial direction field is singular
        // there), which keeps h trace-free everywhere
        let window = if core_radius > 0.0 && r < core_radius {
            let t = r / core_radius;
            t * t * t * (10.0 - 15.0 * t + 6.0 * t * t)
        } else {
            1.0
        };
        let u = capped_inv_r(r, core_radius);
        let amp = 1.5 * u * u * window;
        let (i, j) = match comp {
            0 => (0, 0),
            1 => (0, 1),
            2 => (0, 2),
            3 => (1, 1),
            4 => (1, 2),
            _ => (2, 2),
        };
        let dij = if i == j { 1.0 } else { 0.0 };
        amp * (p[i] * n[j] + p[j] * n[i] - (dij - n[i] * n[j]) * pn)
    });
    let mut params = BTreeMap::new();
    params.insert("px".into(), p[0]);
    params.insert("py".into(), p[1]);
    params.insert("pz".into(), p[2]);
    params.insert("m_conf".into(), m_conf);
    params.insert("core_radius".into(), core_radius);
    Ok(InitialDataSet {
        grid: grid.clone(),
        g,
        h,
        provenance: Provenance {
            generator: "bowen-york".into(),
            params,
            decay_exempt: false,
        },
    })
}

/// Toy data for local identity tests: flat metric, h = c * delta.
/// Violates the decay conditions by construction.
pub fn toy_constant_h(grid: &Arc<Grid>, c: f64) -> InitialDataSet {
    let mut params = BTreeMap::new();
    params.insert("c".into(), c);
    InitialDataSet {
        grid: grid.clone(),
        g: Field::from_fn(grid, 6, |_, comp| DELTA[comp]),
        h: Field::from_fn(grid, 6, |_, comp| c * DELTA[comp]),
        provenance: Provenance {
            generator: "toy-constant-h".into(),
            params,
            decay_exempt: true,
        },
    }
}

/// Toy data with a spatially varying h = c x_1 delta, so the Codazzi block
/// and the momentum part of the curvature expression are nonzero.
pub fn toy_linear_h(grid: &Arc<Grid>, c: f64) -> InitialDataSet {
    let mut params = BTreeMap::new();
    params.insert("c".into(), c);
    InitialDataSet {
        grid: grid.clone(),
        g: Field::from_fn(grid, 6, |_, comp| DELTA[comp]),
        h: Field::from_fn(grid, 6, |node, comp| {
            c * grid.coords(node)[0] * DELTA[comp]
        }),
        provenance: Provenance {
            generator: "toy-linear-h".into(),
            params,
            decay_exempt: true,
        },
    }
}

/// Declared decay constants for the shipped generators.
pub fn decay_bounds(p: &Provenance) -> DecayBounds {
    let get = |k: &str| p.params.get(k).copied().unwrap_or(0.0);
    match p.generator.as_str() {
        "schwarzschild" => {
            let m = get("m");
            DecayBounds {
                g: 4.0 * m + 0.5,
                dg: 4.0 * m + 0.5,
                d2g: 12.0 * m + 1.0,
                h: 1e-9,
                dh: 1e-9,
            }
        }
        "bowen-york" => {
            let m = get("m_conf");
            let pn = (get("px").powi(2) + get("py").powi(2) + get("pz").powi(2)).sqrt();
            DecayBounds {
                g: 4.0 * m + 0.5,
                dg: 4.0 * m + 0.5,
                d2g: 12.0 * m + 1.0,
                h: 6.0 * pn + 0.1,
                dh: 30.0 * pn + 1.0,
            }
        }
        _ => DecayBounds {
            g: 1e-9,
            dg: 1e-9,
            d2g: 1e-9,
            h: 1e-9,
            dh: 1e-9,
        },
    }
}

// ---------------------------------------------------------------------------
// AFID1 container
// ---------------------------------------------------------------------------

const MAGIC: &[u8; 5] = b"AFID1";

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
struct HeaderField {
    name: String,
    rank: u8,
    ncomp: usize,
    kind: String, // "real" | "complex"
}

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
struct Header {
    version: u32,
    byte_order: String,
    n_per_axis: usize,
    spacing: f64,
    origin: [f64; 3],
    r_outer: f64,
    provenance: Provenance,
    fields: Vec<HeaderField>,
}

/// A named field going into or coming out of a container.
pub enum StoredField<'a> {
    Real {
        name: &'a str,
        rank: u8,
        field: &'a Field,
    },
    Complex {
        name: &'a str,
        rank: u8,
        field: &'a CField,
    },
}

pub enum LoadedField {
    Real(Field),
    Complex(CField),
}

/// Write a set of fields to an AFID1 container: 5-byte magic, one UTF-8
/// JSON header line, then little-endian binary64 payload in node-major
/// order with components innermost (complex values interleaved re/im).
pub fn save_fields(
    path: &Path,
    grid: &Grid,
    provenance: &Provenance,
    fields: &[StoredField],
) -> Result<()> {
    let header = Header {
        version: 1,
        byte_order: "le".into(),
        n_per_axis: grid.n(),
        spacing: grid.spacing(),
        origin: grid.origin(),
        r_outer: grid.r_outer(),
        provenance: provenance.clone(),
        fields: fields
            .iter()
            .map(|f| match f {
                StoredField::Real { name, rank, field } => HeaderField {
                    name: name.to_string(),
                    rank: *rank,
                    ncomp: field.ncomp(),
                    kind: "real".into(),
                },
                StoredField::Complex { name, rank, field } => HeaderField {
                    name: name.to_string(),
                    rank: *rank,
                    ncomp: field.ncomp(),
                    kind: "complex".into(),
                },
            })
            .collect(),
    };
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    out.write_all(MAGIC)?;
    let header_line =
        serde_json::to_string(&header).map_err(|e| CurvError::FormatHeader(e.to_string()))?;
    out.write_all(header_line.as_bytes())?;
    out.write_all(b"\n")?;
    for f in fields {
        match f {
            StoredField::Real { field, .. } => {
                for v in field.data() {
                    out.write_all(&v.to_le_bytes())?;
                }
            }
            StoredField::Complex { field, .. } => {
                for v in field.data() {
                    out.write_all(&v.re.to_le_bytes())?;
                    out.write_all(&v.im.to_le_bytes())?;
                }
            }
        }
    }
    out.flush()?;
    Ok(())
}

pub struct LoadedContainer {
    pub grid: Arc<Grid>,
    pub provenance: Provenance,
    pub fields: Vec<(String, LoadedField)>,
}

pub fn load_fields(path: &Path) -> Result<LoadedContainer> {
    let mut file = std::io::BufReader::new(std::fs::File::open(path)?);
    let mut magic = [0u8; 5];
    if file.read_exact(&mut magic).is_err() || &magic != MAGIC {
        return Err(CurvError::FormatMagic);
    }
    let mut header_bytes = Vec::new();
    loop {
        let mut b = [0u8; 1];
        if file.read_exact(&mut b).is_err() {
            return Err(CurvError::FormatHeader("missing header line".into()));
        }
        if b[0] == b'\n' {
            break;
        }
        header_bytes.push(b[0]);
        if header_bytes.len() > 1 << 20 {
            return Err(CurvError::FormatHeader("header line too long".into()));
        }
    }
    let header_str = std::str::from_utf8(&header_bytes)
        .map_err(|_| CurvError::FormatHeader("header not UTF-8".into()))?;
    let header: Header = serde_json::from_str(header_str)
        .map_err(|e| CurvError::FormatHeader(e.to_string()))?;
    if header.version != 1 {
        return Err(CurvError::FormatHeader(format!(
            "unsupported version {}",
            header.version
        )));
    }
    if header.byte_order != "le" {
        return Err(CurvError::FormatByteOrder(header.byte_order));
    }
    let grid = Grid::new(
        header.n_per_axis,
        header.spacing,
        header.origin,
        header.r_outer,
    )?;
    let n_nodes = grid.node_count();
    let mut payload = Vec::new();
    file.read_to_end(&mut payload)?;
    let mut expected = 0usize;
    for f in &header.fields {
        let scalars = if f.kind == "complex" { 2 } else { 1 };
        expected += n_nodes * f.ncomp * scalars * 8;
    }
    if payload.len() != expected {
        return Err(CurvError::FormatTruncated {
            expected,
            found: payload.len(),
        });
    }
    let mut fields = Vec::new();
    let mut offset = 0usize;
    for f in &header.fields {
        match f.kind.as_str() {
            "real" => {
                let mut field = Field::zeros(&grid, f.ncomp);
                for v in field.data_mut().iter_mut() {
                    let bytes: [u8; 8] = payload[offset..offset + 8].try_into().unwrap();
                    *v = f64::from_le_bytes(bytes);
                    offset += 8;
                }
                field
                    .assert_finite(&f.name)
                    .map_err(|_| CurvError::FormatNonFinite(f.name.clone()))?;
                fields.push((f.name.clone(), LoadedField::Real(field)));
            }
            "complex" => {
                let mut field = CField::zeros(&grid, f.ncomp);
                for v in field.data_mut().iter_mut() {
                    let re_b: [u8; 8] = payload[offset..offset + 8].try_into().unwrap();
                    let im_b: [u8; 8] = payload[offset + 8..offset + 16].try_into().unwrap();
                    *v = Complex64::new(f64::from_le_bytes(re_b), f64::from_le_bytes(im_b));
                    offset += 16;
                }
                field
                    .assert_finite(&f.name)
                    .map_err(|_| CurvError::FormatNonFinite(f.name.clone()))?;
                fields.push((f.name.clone(), LoadedField::Complex(field)));
            }
            other => {
                return Err(CurvError::FormatHeader(format!("unknown field kind {other}")));
            }
        }
    }
    Ok(LoadedContainer {
        grid,
        provenance: header.provenance,
        fields,
    })
}

/// Save an initial data set (metric + second fundamental form).
pub fn save(data: &InitialDataSet, path: &Path) -> Result<()> {
    save_fields(
        path,
        &data.grid,
        &data.provenance,
        &[
            StoredField::Real {
                name: "g",
                rank: 2,
                field: &data.g,
            },
            StoredField::Real {
                name: "h",
                rank: 2,
                field: &data.h,
            },
        ],
    )
}

/// Load an initial data set saved with [`save`].
pub fn load(path: &Path) -> Result<InitialDataSet> {
    let container = load_fields(path)?;
    let mut g = None;
    let mut h = None;
    for (name, field) in container.fields {
        match (name.as_str(), field) {
            ("g", LoadedField::Real(f)) => {
                if f.ncomp() != 6 {
                    return Err(CurvError::FormatDimension(format!(
                        "field g has {} components, expected 6",
                        f.ncomp()
                    )));
                }
                g = Some(f);
            }
            ("h", LoadedField::Real(f)) => {
                if f.ncomp() != 6 {
                    return Err(CurvError::FormatDimension(format!(
                        "field h has {} components, expected 6",
                        f.ncomp()
                    )));
                }
                h = Some(f);
            }
            (name, _) => {
                return Err(CurvError::FormatDimension(format!(
                    "unexpected field `{name}` in dataset container"
                )));
            }
        }
    }
    match (g, h) {
        (Some(g), Some(h)) => Ok(InitialDataSet {
            grid: container.grid,
            g,
            h,
            provenance: container.provenance,
        }),
        _ => Err(CurvError::FormatDimension(
            "dataset container must hold fields g and h".into(),
        )),
    }
}
