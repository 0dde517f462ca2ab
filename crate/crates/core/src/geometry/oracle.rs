//! Brute-force reference solver: exhaustive grid search on the squared
//! distance-difference mismatch, then local refinement of the coarse minima.

use super::{
    hyperbola_residual_scaled, Axis, DeltaDistance, GeometryError, Method, Quadrant, SensorLayout, TapEstimate,
    DEGENERATE_INTERCEPT_CM,
};
use crate::Scalar;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SearchBox<T> {
    pub x_min: T,
    pub x_max: T,
    pub y_min: T,
    pub y_max: T,
}

impl<T: Scalar> SearchBox<T> {
    pub fn square(half_width: T) -> Self {
        Self { x_min: -half_width, x_max: half_width, y_min: -half_width, y_max: half_width }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleConfig<T> {
    pub search_box: SearchBox<T>,
    /// Coarse grid step in cm; the refinement pass uses `resolution / 100`.
    pub resolution: T,
    /// `speed_x / speed_y`; 1 for an isotropic surface.
    pub anisotropy: T,
}

impl<T: Scalar> OracleConfig<T> {
    pub fn new(search_box: SearchBox<T>, resolution: T) -> Self {
        Self { search_box, resolution, anisotropy: T::one() }
    }

    pub fn refinement_step(&self) -> T {
        self.resolution / T::lit(100.0)
    }
}

struct Objective<T> {
    sx: T,
    sy: T,
    k: T,
    offset_lr: T,
    offset_tb: T,
}

impl<T: Scalar> Objective<T> {
    fn eval(&self, x: T, y: T) -> T {
        let ky = self.k * y;
        let xk = x / self.k;
        let lr = (x + self.sx).hypot(ky) - (x - self.sx).hypot(ky) - self.offset_lr;
        let tb = xk.hypot(y + self.sy) - xk.hypot(y - self.sy) - self.offset_tb;
        lr * lr + tb * tb
    }
}

fn steps<T: Scalar>(lo: T, hi: T, step: T) -> usize {
    ((hi - lo) / step).round().to_usize().unwrap_or(0) + 1
}

/// Coarse cells refined from; the objective can have shallow spurious
/// minima far from the sensors.
const MAX_STARTS: usize = 16;
const MAX_RECENTERS: usize = 200;

impl<T: Scalar> Objective<T> {
    /// Best point of the `(2n+1)²` lattice of spacing `step` centred on
    /// `centre`, recentred until the optimum is interior to the window.
    fn descend(&self, centre: (T, T), step: T, bx: &SearchBox<T>) -> (T, (T, T)) {
        let n = 10i32;
        let mut best = (self.eval(centre.0, centre.1), centre);
        for _ in 0..MAX_RECENTERS {
            let c = best.1;
            let mut edge = false;
            for i in -n..=n {
                let x = c.0 + T::from_i32(i).unwrap() * step;
                if x < bx.x_min || x > bx.x_max {
                    continue;
                }
                for j in -n..=n {
                    let y = c.1 + T::from_i32(j).unwrap() * step;
                    if y < bx.y_min || y > bx.y_max {
                        continue;
                    }
                    let v = self.eval(x, y);
                    if v < best.0 {
                        best = (v, (x, y));
                        edge = i.abs() == n || j.abs() == n;
                    }
                }
            }
            if !edge {
                break;
            }
        }
        best
    }
}

/// Grid-search position estimate from the two distance differences.
///
/// Every local minimum of the coarse grid is refined in two stages, to
/// `resolution / 10` and then `resolution / 100`; each stage slides its
/// window along the objective until the optimum is interior. The lowest
/// refined point wins.
pub fn oracle_solve<T: Scalar>(
    lr: &DeltaDistance<T>,
    tb: &DeltaDistance<T>,
    layout: &SensorLayout<T>,
    config: &OracleConfig<T>,
) -> Result<TapEstimate<T>, GeometryError> {
    let res = config.resolution;
    if !(res > T::zero()) {
        return Err(GeometryError::InvalidResolution(res.as_f64()));
    }
    let bx = config.search_box;
    let f = Objective {
        sx: layout.half_sep_x,
        sy: layout.half_sep_y,
        k: config.anisotropy,
        offset_lr: lr.axis_offset(),
        offset_tb: tb.axis_offset(),
    };

    let nx = steps(bx.x_min, bx.x_max, res);
    let ny = steps(bx.y_min, bx.y_max, res);
    let at = |lo: T, i: usize, step: T| lo + T::from_usize(i).unwrap() * step;
    let grid: Vec<T> = (0..nx)
        .flat_map(|i| (0..ny).map(move |j| (i, j)))
        .map(|(i, j)| f.eval(at(bx.x_min, i, res), at(bx.y_min, j, res)))
        .collect();
    let value = |i: usize, j: usize| grid[i * ny + j];
    let mut starts: Vec<(T, usize, usize)> = Vec::new();
    for i in 0..nx {
        for j in 0..ny {
            let v = value(i, j);
            let is_min = (i.saturating_sub(1)..=(i + 1).min(nx - 1))
                .all(|a| (j.saturating_sub(1)..=(j + 1).min(ny - 1)).all(|b| value(a, b) >= v));
            if is_min {
                starts.push((v, i, j));
            }
        }
    }
    starts.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(std::cmp::Ordering::Equal));
    starts.truncate(MAX_STARTS);

    let fine = config.refinement_step();
    let mid = res / T::lit(10.0);
    let mut refined = (T::infinity(), (T::zero(), T::zero()));
    for &(_, i, j) in &starts {
        let c = (at(bx.x_min, i, res), at(bx.y_min, j, res));
        let (_, c) = f.descend(c, mid, &bx);
        let cand = f.descend(c, fine, &bx);
        if cand.0 < refined.0 {
            refined = cand;
        }
    }
    let (x, y) = refined.1;
    let near_edge = |v: T, lo: T, hi: T| v - lo < res || hi - v < res;
    if !refined.0.is_finite() || near_edge(x, bx.x_min, bx.x_max) || near_edge(y, bx.y_min, bx.y_max) {
        return Err(GeometryError::BoxTooSmall(x.as_f64(), y.as_f64()));
    }

    let tol = T::lit(DEGENERATE_INTERCEPT_CM);
    let a = f.offset_lr / T::lit(2.0);
    let b = f.offset_tb / T::lit(2.0);
    let residual_lr = if a.abs() < tol {
        x / layout.half_sep_x
    } else {
        hyperbola_residual_scaled((x, y), a, layout.half_sep_x, Axis::X, config.anisotropy)?
    };
    let residual_tb = if b.abs() < tol {
        y / layout.half_sep_y
    } else {
        hyperbola_residual_scaled((x, y), b, layout.half_sep_y, Axis::Y, config.anisotropy)?
    };
    let side = |v: T| {
        if v > fine / T::lit(2.0) {
            1
        } else if v < -fine / T::lit(2.0) {
            -1
        } else {
            0
        }
    };
    Ok(TapEstimate {
        x,
        y,
        quadrant: Quadrant::from_signs(side(x), side(y)),
        residual_lr,
        residual_tb,
        method: Method::Oracle,
    })
}
