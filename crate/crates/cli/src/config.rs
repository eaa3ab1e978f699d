//! Configuration files and inline argument formats.

use billiards::error::{Error, Result};
use billiards::expr::parse_expression;
use billiards::flow::BilliardTable;
use billiards::geom::{CentralQuadric, PencilConfig, PseudoConfocalPencil, QuadraticForm};
use billiards::reflect::TransverseField;
use billiards::surface::{ImplicitSurface, SurfaceField};
use nalgebra::{DMatrix, DVector};
use serde::Deserialize;

/// Table description:
/// `{"dimension":3,"surface":{...},"field":{...},"interior_point":[...]}`.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TableConfig {
    pub dimension: usize,
    pub surface: SurfaceConfig,
    pub field: FieldConfig,
    pub interior_point: Vec<f64>,
}

/// `{"kind":"quadric","A":[[...]]}` or `{"kind":"implicit","expression":"..."}`.
#[derive(Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum SurfaceConfig {
    Quadric {
        #[serde(rename = "A")]
        a: Vec<Vec<f64>>,
    },
    Implicit {
        expression: String,
    },
}

/// `{"kind":"euclidean"}`, `{"kind":"pseudo","Q":[[...]]}` or
/// `{"kind":"custom","nu":["...", ...]}`.
#[derive(Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum FieldConfig {
    Euclidean,
    Pseudo {
        #[serde(rename = "Q")]
        q: Vec<Vec<f64>>,
    },
    Custom {
        nu: Vec<String>,
    },
}

fn matrix_from_rows(rows: &[Vec<f64>], what: &str) -> Result<DMatrix<f64>> {
    let n = rows.len();
    if n == 0 || rows.iter().any(|r| r.len() != n) {
        return Err(Error::Input(format!("{what} matrix must be square")));
    }
    let mut m = DMatrix::zeros(n, n);
    for (i, row) in rows.iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            m[(i, j)] = *v;
        }
    }
    Ok(m)
}

impl TableConfig {
    pub fn parse(text: &str) -> Result<TableConfig> {
        serde_json::from_str(text).map_err(|e| Error::Input(format!("table config: {e}")))
    }

    pub fn build(&self) -> Result<BilliardTable> {
        let d = self.dimension;
        if self.interior_point.len() != d {
            return Err(Error::Input(
                "interior_point length does not match dimension".into(),
            ));
        }
        let interior = DVector::from_row_slice(&self.interior_point);
        let surface_field = match &self.surface {
            SurfaceConfig::Quadric { a } => {
                let m = matrix_from_rows(a, "surface")?;
                if m.nrows() != d {
                    return Err(Error::Input(
                        "surface matrix does not match dimension".into(),
                    ));
                }
                SurfaceField::Quadric(CentralQuadric::new(m)?)
            }
            SurfaceConfig::Implicit { expression } => {
                SurfaceField::Implicit(parse_expression(expression, d)?)
            }
        };
        let surface = ImplicitSurface::oriented_with_interior(surface_field, &interior)?;
        let field = match &self.field {
            FieldConfig::Euclidean => TransverseField::Euclidean,
            FieldConfig::Pseudo { q } => {
                let m = matrix_from_rows(q, "field")?;
                if m.nrows() != d {
                    return Err(Error::Input("field matrix does not match dimension".into()));
                }
                TransverseField::QNormal(QuadraticForm::new(m)?)
            }
            FieldConfig::Custom { nu } => {
                if nu.len() != d {
                    return Err(Error::Input(
                        "custom field needs one expression per coordinate".into(),
                    ));
                }
                let components = nu
                    .iter()
                    .map(|text| parse_expression(text, d))
                    .collect::<Result<Vec<_>>>()?;
                TransverseField::Custom(components)
            }
        };
        BilliardTable::new(surface, field, interior)
    }
}

/// Comma-separated coordinates: `"0.1,0,-0.2"`.
pub fn parse_vector(text: &str) -> Result<DVector<f64>> {
    let values = text
        .split(',')
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| Error::Input(format!("bad coordinate `{s}`")))
        })
        .collect::<Result<Vec<f64>>>()?;
    if values.is_empty() {
        return Err(Error::Input("empty coordinate list".into()));
    }
    Ok(DVector::from_vec(values))
}

/// Initial condition `"px,py,pz;vx,vy,vz"`.
pub fn parse_init(text: &str) -> Result<(DVector<f64>, DVector<f64>)> {
    let (p, v) = text
        .split_once(';')
        .ok_or_else(|| Error::Input("initial condition needs `point;direction`".into()))?;
    Ok((parse_vector(p)?, parse_vector(v)?))
}

/// Pencil specification: inline `"4,2,1;r=3"` or a path to a JSON file
/// `{"a":[...],"r":n}`.
pub fn load_pencil(spec: &str) -> Result<PseudoConfocalPencil> {
    if let Some((axes, r_part)) = spec.split_once(';') {
        let a = parse_vector(axes)?;
        let r_text = r_part
            .trim()
            .strip_prefix("r=")
            .ok_or_else(|| Error::Input("pencil spec needs `a1,..,ad;r=<int>`".into()))?;
        let r: usize = r_text
            .parse()
            .map_err(|_| Error::Input(format!("bad signature count `{r_text}`")))?;
        return PseudoConfocalPencil::new(a.iter().cloned().collect(), r);
    }
    let text = std::fs::read_to_string(spec)
        .map_err(|e| Error::Input(format!("cannot read pencil file `{spec}`: {e}")))?;
    let config: PencilConfig =
        serde_json::from_str(&text).map_err(|e| Error::Input(format!("pencil config: {e}")))?;
    PseudoConfocalPencil::from_config(&config)
}
