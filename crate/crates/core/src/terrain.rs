//! Height maps, footprint-averaged queries and local plane fitting.

use std::fmt::Write as _;
use std::io::{BufRead, Write};

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, Error, Result};
use crate::lip::{Foothold, Vec2};

pub const DEFAULT_FOOTPRINT: f64 = 0.09;
pub const MIN_COVERAGE: f64 = 0.25;

/// Ground plane `z = offset + alpha * x + beta * y` in world coordinates.
#[derive(Clone, Copy, Debug, PartialEq, Default, Serialize, Deserialize)]
pub struct TerrainPlane {
    pub alpha: f64,
    pub beta: f64,
    pub offset: f64,
}

impl TerrainPlane {
    pub fn new(alpha: f64, beta: f64, offset: f64) -> Self {
        Self {
            alpha,
            beta,
            offset,
        }
    }

    pub fn flat(offset: f64) -> Self {
        Self::new(0.0, 0.0, offset)
    }

    /// Plane rising at `angle_deg` along `heading_deg`.
    pub fn ramp(angle_deg: f64, heading_deg: f64) -> Self {
        let g = angle_deg.to_radians().tan();
        let h = heading_deg.to_radians();
        Self::new(g * h.cos(), g * h.sin(), 0.0)
    }

    pub fn height_at(&self, p: &Vec2) -> f64 {
        self.offset + self.alpha * p.x + self.beta * p.y
    }

    pub fn gradient(&self) -> Vec2 {
        Vec2::new(self.alpha, self.beta)
    }

    /// Steepest inclination in degrees.
    pub fn slope_deg(&self) -> f64 {
        self.gradient().norm().atan().to_degrees()
    }

    pub fn normal(&self) -> Vector3<f64> {
        Vector3::new(-self.alpha, -self.beta, 1.0).normalize()
    }

    pub fn is_finite(&self) -> bool {
        self.alpha.is_finite() && self.beta.is_finite() && self.offset.is_finite()
    }
}

/// Regular height grid. Cell `(r, c)` is centered at
/// `origin + (c * resolution, r * resolution)`; NaN marks a missing cell.
#[derive(Clone, Debug, PartialEq)]
pub struct HeightMap {
    origin: Vec2,
    resolution: f64,
    rows: usize,
    cols: usize,
    heights: Vec<f64>,
}

/// Footprint-averaged height and the mean position of the cells used.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FootprintSample {
    pub height: f64,
    pub centroid: Vec2,
    pub cells: usize,
}

impl HeightMap {
    pub fn new(origin: Vec2, resolution: f64, rows: usize, cols: usize, heights: Vec<f64>) -> Result<Self> {
        ensure_finite("map origin", &[origin.x, origin.y])?;
        if !(resolution.is_finite() && resolution > 0.0) {
            return Err(Error::InvalidInput(format!("resolution must be > 0, got {resolution}")));
        }
        if rows == 0 || cols == 0 {
            return Err(Error::InvalidInput("height map must be non-empty".into()));
        }
        if heights.len() != rows * cols {
            return Err(Error::DimensionMismatch {
                what: "height grid",
                expected: rows * cols,
                got: heights.len(),
            });
        }
        if heights.iter().any(|h| h.is_infinite()) {
            return Err(Error::InvalidInput("heights must be finite or nan".into()));
        }
        Ok(Self {
            origin,
            resolution,
            rows,
            cols,
            heights,
        })
    }

    /// Samples `f` at every cell center.
    pub fn from_fn(origin: Vec2, resolution: f64, rows: usize, cols: usize, f: impl Fn(Vec2) -> f64) -> Result<Self> {
        let mut heights = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                heights.push(f(origin + Vec2::new(c as f64, r as f64) * resolution));
            }
        }
        Self::new(origin, resolution, rows, cols, heights)
    }

    pub fn flat(origin: Vec2, resolution: f64, rows: usize, cols: usize, height: f64) -> Result<Self> {
        Self::from_fn(origin, resolution, rows, cols, |_| height)
    }

    /// Ramp rising along +x at `angle_deg`, zero height at `x = 0`.
    pub fn ramp(origin: Vec2, resolution: f64, rows: usize, cols: usize, angle_deg: f64) -> Result<Self> {
        let g = angle_deg.to_radians().tan();
        Self::from_fn(origin, resolution, rows, cols, |p| g * p.x)
    }

    /// Staircase along +x: each `step_length` of travel adds `step_height`.
    pub fn steps(
        origin: Vec2,
        resolution: f64,
        rows: usize,
        cols: usize,
        step_length: f64,
        step_height: f64,
    ) -> Result<Self> {
        if !(step_length > 0.0) {
            return Err(Error::InvalidInput("step length must be > 0".into()));
        }
        Self::from_fn(origin, resolution, rows, cols, |p| {
            (p.x / step_length).floor().max(0.0) * step_height
        })
    }

    pub fn origin(&self) -> Vec2 {
        self.origin
    }

    pub fn resolution(&self) -> f64 {
        self.resolution
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, r: usize, c: usize) -> Option<f64> {
        (r < self.rows && c < self.cols)
            .then(|| self.heights[r * self.cols + c])
            .filter(|h| !h.is_nan())
    }

    pub fn set(&mut self, r: usize, c: usize, h: f64) {
        self.heights[r * self.cols + c] = h;
    }

    pub fn cell_center(&self, r: usize, c: usize) -> Vec2 {
        self.origin + Vec2::new(c as f64, r as f64) * self.resolution
    }

    /// Present cells whose centers lie in the square of half-width `radius`.
    fn footprint_cells(&self, center: &Vec2, radius: f64) -> Result<(Vec<(Vec2, f64)>, usize)> {
        ensure_finite("query center", &[center.x, center.y])?;
        if !(radius.is_finite() && radius > 0.0) {
            return Err(Error::InvalidInput(format!("footprint radius must be > 0, got {radius}")));
        }
        let rel = (center - self.origin) / self.resolution;
        let span = radius / self.resolution;
        let c_lo = (rel.x - span).ceil() as i64;
        let c_hi = (rel.x + span).floor() as i64;
        let r_lo = (rel.y - span).ceil() as i64;
        let r_hi = (rel.y + span).floor() as i64;
        let mut cells = Vec::new();
        let mut total = 0;
        for r in r_lo..=r_hi {
            for c in c_lo..=c_hi {
                total += 1;
                if r < 0 || c < 0 {
                    continue;
                }
                if let Some(h) = self.get(r as usize, c as usize) {
                    cells.push((self.cell_center(r as usize, c as usize), h));
                }
            }
        }
        let covered = total > 0 && (cells.len() as f64) >= MIN_COVERAGE * total as f64;
        if cells.is_empty() || !covered {
            return Err(Error::NoData {
                x: center.x,
                y: center.y,
            });
        }
        Ok((cells, total))
    }

    pub fn footprint_sample(&self, center: &Vec2, radius: f64) -> Result<FootprintSample> {
        let (cells, _) = self.footprint_cells(center, radius)?;
        let n = cells.len() as f64;
        let height = cells.iter().map(|(_, h)| h).sum::<f64>() / n;
        let centroid = cells.iter().fold(Vec2::zeros(), |a, (p, _)| a + p) / n;
        Ok(FootprintSample {
            height,
            centroid,
            cells: cells.len(),
        })
    }

    pub fn write_to<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "HMAP v1")?;
        writeln!(
            out,
            "{} {} {} {} {}",
            self.origin.x, self.origin.y, self.resolution, self.rows, self.cols
        )?;
        let mut line = String::new();
        for r in 0..self.rows {
            line.clear();
            for c in 0..self.cols {
                if c > 0 {
                    line.push(' ');
                }
                let h = self.heights[r * self.cols + c];
                if h.is_nan() {
                    line.push_str("nan");
                } else {
                    let _ = write!(line, "{h}");
                }
            }
            writeln!(out, "{line}")?;
        }
        Ok(())
    }

    pub fn read_from<R: BufRead>(input: R) -> Result<Self> {
        let mut lines = input.lines().enumerate().map(|(i, l)| (i + 1, l));
        let mut next_line = |what: &str| -> Result<(usize, String)> {
            match lines.next() {
                Some((n, Ok(l))) => Ok((n, l)),
                Some((_, Err(e))) => Err(e.into()),
                None => Err(Error::MapParse {
                    line: 0,
                    msg: format!("unexpected end of file, expected {what}"),
                }),
            }
        };
        let (n, magic) = next_line("header")?;
        if magic.trim() != "HMAP v1" {
            return Err(Error::MapParse {
                line: n,
                msg: format!("expected `HMAP v1`, found `{}`", magic.trim()),
            });
        }
        let (n, dims) = next_line("dimensions")?;
        let fields: Vec<&str> = dims.split_whitespace().collect();
        let bad = |msg: String| Error::MapParse { line: n, msg };
        if fields.len() != 5 {
            return Err(bad(format!("expected 5 fields, found {}", fields.len())));
        }
        let num = |s: &str| s.parse::<f64>().map_err(|_| bad(format!("invalid number `{s}`")));
        let int = |s: &str| s.parse::<usize>().map_err(|_| bad(format!("invalid count `{s}`")));
        let origin = Vec2::new(num(fields[0])?, num(fields[1])?);
        let resolution = num(fields[2])?;
        let (rows, cols) = (int(fields[3])?, int(fields[4])?);
        let mut heights = Vec::with_capacity(rows * cols);
        for _ in 0..rows {
            let (n, row) = next_line("height row")?;
            let before = heights.len();
            for tok in row.split_whitespace() {
                let h = if tok.eq_ignore_ascii_case("nan") {
                    f64::NAN
                } else {
                    match tok.parse::<f64>() {
                        Ok(h) if h.is_finite() => h,
                        _ => {
                            return Err(Error::MapParse {
                                line: n,
                                msg: format!("invalid height `{tok}`"),
                            })
                        }
                    }
                };
                heights.push(h);
            }
            if heights.len() - before != cols {
                return Err(Error::MapParse {
                    line: n,
                    msg: format!("expected {cols} heights, found {}", heights.len() - before),
                });
            }
        }
        Self::new(origin, resolution, rows, cols, heights).map_err(|e| Error::MapParse {
            line: 2,
            msg: e.to_string(),
        })
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Self::read_from(std::io::BufReader::new(file))
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_to(&mut file)?;
        file.flush()?;
        Ok(())
    }
}

/// Mean height of the present cells within the footprint square.
pub fn query_footprint_height(map: &HeightMap, center: &Vec2, footprint_radius: f64) -> Result<f64> {
    Ok(map.footprint_sample(center, footprint_radius)?.height)
}

/// Least-squares plane through `(x, y, z)` points.
pub fn fit_plane_points(points: &[(Vec2, f64)]) -> Result<TerrainPlane> {
    if points.len() < 3 {
        return Err(Error::DegenerateFit(format!("need 3 points, got {}", points.len())));
    }
    // Center the data.
    let n = points.len() as f64;
    let mean = points.iter().fold(Vec2::zeros(), |a, (p, _)| a + p) / n;
    let zmean = points.iter().map(|(_, z)| z).sum::<f64>() / n;
    let mut ata = Matrix3::zeros();
    let mut atb = Vector3::zeros();
    for (p, z) in points {
        let d = p - mean;
        let row = Vector3::new(d.x, d.y, 1.0);
        ata += row * row.transpose();
        atb += row * (z - zmean);
    }
    let spread = points
        .iter()
        .map(|(p, _)| (p - mean).norm_squared())
        .fold(0.0, f64::max);
    let det = ata[(0, 0)] * ata[(1, 1)] - ata[(0, 1)] * ata[(1, 0)];
    if !(spread > 0.0) || det.abs() <= 1e-12 * (n * spread).powi(2) {
        return Err(Error::DegenerateFit("query points are collinear".into()));
    }
    let sol = ata
        .lu()
        .solve(&atb)
        .ok_or_else(|| Error::DegenerateFit("singular normal equations".into()))?;
    let (alpha, beta) = (sol.x, sol.y);
    let offset = zmean + sol.z - alpha * mean.x - beta * mean.y;
    Ok(TerrainPlane::new(alpha, beta, offset))
}

/// Plane through the footprint-averaged heights at the support foot and
/// the planned footholds.
pub fn fit_plane(
    map: &HeightMap,
    support: &Foothold,
    planned: &[Foothold],
    footprint_radius: f64,
) -> Result<TerrainPlane> {
    let points = std::iter::once(support)
        .chain(planned)
        .map(|f| {
            map.footprint_sample(&f.xy, footprint_radius)
                .map(|s| (s.centroid, s.height))
        })
        .collect::<Result<Vec<_>>>()?;
    fit_plane_points(&points)
}

/// Unit normal of the plane fitted to the cells under a footprint.
pub fn foot_normal(map: &HeightMap, center: &Vec2, footprint_radius: f64) -> Result<Vector3<f64>> {
    let (cells, _) = map.footprint_cells(center, footprint_radius)?;
    Ok(fit_plane_points(&cells)?.normal())
}

/// Plane fitted to every present cell in a square region.
pub fn region_plane(map: &HeightMap, center: &Vec2, half_width: f64) -> Result<TerrainPlane> {
    let (cells, _) = map.footprint_cells(center, half_width)?;
    fit_plane_points(&cells)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ReductionReport {
    /// Gradient across the heading; zero when the planar reduction is exact.
    pub lateral_gradient: f64,
    pub longitudinal_gradient: f64,
    /// Angle between the heading axis and the steepest direction, in [0, 90].
    pub heading_deviation_deg: f64,
    pub valid: bool,
}

pub const DEFAULT_HEADING_THRESHOLD_DEG: f64 = 5.0;

pub fn check_reduction_validity(plane: &TerrainPlane, heading: &Vec2, threshold_deg: f64) -> ReductionReport {
    let h = if heading.norm() > 0.0 {
        heading.normalize()
    } else {
        Vec2::x()
    };
    let g = plane.gradient();
    let longitudinal = g.dot(&h);
    let lateral = h.x * g.y - h.y * g.x;
    let deviation = if g.norm() <= 1e-12 {
        0.0
    } else {
        lateral.abs().atan2(longitudinal.abs()).to_degrees()
    };
    ReductionReport {
        lateral_gradient: lateral,
        longitudinal_gradient: longitudinal,
        heading_deviation_deg: deviation,
        valid: deviation <= threshold_deg,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp_map(deg: f64) -> HeightMap {
        HeightMap::ramp(Vec2::new(-1.0, -1.0), 0.02, 101, 151, deg).unwrap()
    }

    #[test]
    fn uniform_map_query() {
        let m = HeightMap::flat(Vec2::zeros(), 0.05, 20, 20, 0.3).unwrap();
        let h = query_footprint_height(&m, &Vec2::new(0.4, 0.5), 0.09).unwrap();
        assert!((h - 0.3).abs() < 1e-15);
    }

    #[test]
    fn missing_footprint_is_no_data() {
        let mut m = HeightMap::flat(Vec2::zeros(), 0.05, 20, 20, 0.0).unwrap();
        for r in 0..20 {
            for c in 0..20 {
                m.set(r, c, f64::NAN);
            }
        }
        assert!(matches!(
            query_footprint_height(&m, &Vec2::new(0.5, 0.5), 0.09),
            Err(Error::NoData { .. })
        ));
    }

    #[test]
    fn three_points_exact() {
        let pts = [
            (Vec2::new(0.0, 0.0), 0.0),
            (Vec2::new(1.0, 0.0), 0.1),
            (Vec2::new(0.0, 1.0), 0.0),
        ];
        let p = fit_plane_points(&pts).unwrap();
        assert!((p.alpha - 0.1).abs() < 1e-15);
        assert!(p.beta.abs() < 1e-15);
    }

    #[test]
    fn collinear_is_degenerate() {
        let pts = [
            (Vec2::new(0.0, 0.0), 0.0),
            (Vec2::new(1.0, 1.0), 0.1),
            (Vec2::new(2.0, 2.0), 0.2),
        ];
        assert!(matches!(fit_plane_points(&pts), Err(Error::DegenerateFit(_))));
    }

    #[test]
    fn ramp_slope_recovered() {
        let m = ramp_map(10.0);
        let p = fit_plane(
            &m,
            &Foothold::new(0.0, 0.1),
            &[Foothold::new(0.2, -0.1), Foothold::new(0.4, 0.1)],
            DEFAULT_FOOTPRINT,
        )
        .unwrap();
        assert!((p.slope_deg() - 10.0).abs() < 1e-6);
    }

    #[test]
    fn flat_normal_is_vertical() {
        let m = HeightMap::flat(Vec2::zeros(), 0.05, 20, 20, 0.2).unwrap();
        let n = foot_normal(&m, &Vec2::new(0.5, 0.5), 0.09).unwrap();
        assert!((n - Vector3::z()).norm() < 1e-12);
    }

    #[test]
    fn reduction_checks() {
        let ramp = TerrainPlane::ramp(10.0, 0.0);
        let aligned = check_reduction_validity(&ramp, &Vec2::x(), 5.0);
        assert_eq!(aligned.lateral_gradient, 0.0);
        assert!(aligned.valid);
        let across = check_reduction_validity(&ramp, &Vec2::y(), 5.0);
        assert!(!across.valid);
        assert!((across.heading_deviation_deg - 90.0).abs() < 1e-12);
        for deg in [0.0, 33.0, 170.0] {
            let h = Vec2::new(f64::cos(deg), f64::sin(deg));
            assert!(check_reduction_validity(&TerrainPlane::flat(0.2), &h, 5.0).valid);
        }
    }

    #[test]
    fn hmap_round_trip() {
        let mut m = HeightMap::ramp(Vec2::new(-0.5, 0.25), 0.1, 3, 4, 7.0).unwrap();
        m.set(1, 2, f64::NAN);
        let mut buf = Vec::new();
        m.write_to(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("HMAP v1\n-0.5 0.25 0.1 3 4\n"));
        assert!(text.contains("nan"));
        let back = HeightMap::read_from(&buf[..]).unwrap();
        assert_eq!(back.get(1, 2), None);
        for r in 0..3 {
            for c in 0..4 {
                assert_eq!(back.get(r, c), m.get(r, c));
            }
        }
    }

    #[test]
    fn parse_error_names_line() {
        let text = "HMAP v1\n0 0 0.1 2 2\n0 0\n0 oops\n";
        match HeightMap::read_from(text.as_bytes()) {
            Err(Error::MapParse { line, .. }) => assert_eq!(line, 4),
            other => panic!("unexpected {other:?}"),
        }
    }
}
