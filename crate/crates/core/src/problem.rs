//! Data of the first-order Poisson system on the unit square:
//! `p - grad u = 0`, `-div p = g`, `u = h_D` on the Dirichlet part and
//! `p . n = h_N` on the Neumann part of the boundary.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use crate::mesh::BoundarySpec;

pub type ScalarField = Arc<dyn Fn([f64; 2]) -> f64 + Send + Sync>;
pub type VectorField = Arc<dyn Fn([f64; 2]) -> [f64; 2] + Send + Sync>;

/// Named data sets.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Preset {
    /// `g = 0`, `h_D = cos(pi x / 2)`, `h_N = 1`, Neumann on the left side.
    PaperCorner,
    /// `u = sin(pi x) sin(pi y)` with homogeneous Dirichlet data everywhere.
    ManufacturedSmooth,
}

impl Preset {
    pub fn name(self) -> &'static str {
        match self {
            Preset::PaperCorner => "paper-corner",
            Preset::ManufacturedSmooth => "manufactured-smooth",
        }
    }

    pub fn parse(text: &str) -> Option<Self> {
        match text {
            "paper-corner" => Some(Preset::PaperCorner),
            "manufactured-smooth" => Some(Preset::ManufacturedSmooth),
            _ => None,
        }
    }

    pub fn data(self) -> ProblemData {
        match self {
            Preset::PaperCorner => ProblemData::paper_corner(),
            Preset::ManufacturedSmooth => ProblemData::manufactured_smooth(),
        }
    }
}

/// Closed-form solution `(p, u) = (grad u, u)`.
#[derive(Clone)]
pub struct ExactSolution {
    pub u: ScalarField,
    pub grad: VectorField,
}

/// Boundary partition, source density and boundary data.
#[derive(Clone)]
pub struct ProblemData {
    pub boundary: BoundarySpec,
    pub source: Option<ScalarField>,
    pub dirichlet: Option<ScalarField>,
    pub neumann: Option<ScalarField>,
    pub exact: Option<ExactSolution>,
}

impl fmt::Debug for ProblemData {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ProblemData")
            .field("boundary", &self.boundary)
            .field("source", &self.source.is_some())
            .field("dirichlet", &self.dirichlet.is_some())
            .field("neumann", &self.neumann.is_some())
            .field("exact", &self.exact.is_some())
            .finish()
    }
}

impl ProblemData {
    /// All data zero; `None` fields stand for the zero function.
    pub fn homogeneous(boundary: BoundarySpec) -> Self {
        Self {
            boundary,
            source: None,
            dirichlet: None,
            neumann: None,
            exact: None,
        }
    }

    pub fn paper_corner() -> Self {
        Self {
            boundary: BoundarySpec::left_neumann(),
            source: None,
            dirichlet: Some(Arc::new(|x: [f64; 2]| (0.5 * PI * x[0]).cos())),
            neumann: Some(Arc::new(|_| 1.0)),
            exact: None,
        }
    }

    pub fn manufactured_smooth() -> Self {
        Self {
            boundary: BoundarySpec::dirichlet(),
            source: Some(Arc::new(|x: [f64; 2]| {
                2.0 * PI * PI * (PI * x[0]).sin() * (PI * x[1]).sin()
            })),
            dirichlet: None,
            neumann: None,
            exact: Some(ExactSolution {
                u: Arc::new(|x: [f64; 2]| (PI * x[0]).sin() * (PI * x[1]).sin()),
                grad: Arc::new(|x: [f64; 2]| {
                    [
                        PI * (PI * x[0]).cos() * (PI * x[1]).sin(),
                        PI * (PI * x[0]).sin() * (PI * x[1]).cos(),
                    ]
                }),
            }),
        }
    }

    pub fn with_source(mut self, g: impl Fn([f64; 2]) -> f64 + Send + Sync + 'static) -> Self {
        self.source = Some(Arc::new(g));
        self
    }

    pub fn with_dirichlet(mut self, h: impl Fn([f64; 2]) -> f64 + Send + Sync + 'static) -> Self {
        self.dirichlet = Some(Arc::new(h));
        self
    }

    pub fn with_neumann(mut self, h: impl Fn([f64; 2]) -> f64 + Send + Sync + 'static) -> Self {
        self.neumann = Some(Arc::new(h));
        self
    }

    pub fn with_exact(
        mut self,
        u: impl Fn([f64; 2]) -> f64 + Send + Sync + 'static,
        grad: impl Fn([f64; 2]) -> [f64; 2] + Send + Sync + 'static,
    ) -> Self {
        self.exact = Some(ExactSolution {
            u: Arc::new(u),
            grad: Arc::new(grad),
        });
        self
    }

    /// Whether both boundary data vanish.
    pub fn has_homogeneous_boundary_data(&self) -> bool {
        self.dirichlet.is_none() && self.neumann.is_none()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_round_trip_names() {
        for p in [Preset::PaperCorner, Preset::ManufacturedSmooth] {
            assert_eq!(Preset::parse(p.name()), Some(p));
        }
        assert_eq!(Preset::parse("other"), None);
    }

    #[test]
    fn manufactured_source_is_minus_laplacian() {
        let d = ProblemData::manufactured_smooth();
        let ex = d.exact.clone().unwrap();
        let g = d.source.clone().unwrap();
        let h = 1e-4;
        for x in [[0.3, 0.6], [0.71, 0.12]] {
            let lap = ((ex.u)([x[0] + h, x[1]])
                + (ex.u)([x[0] - h, x[1]])
                + (ex.u)([x[0], x[1] + h])
                + (ex.u)([x[0], x[1] - h])
                - 4.0 * (ex.u)(x))
                / (h * h);
            assert!((g(x) + lap).abs() < 1e-5);
        }
        assert!(d.has_homogeneous_boundary_data());
        assert!(!ProblemData::paper_corner().has_homogeneous_boundary_data());
    }
}
