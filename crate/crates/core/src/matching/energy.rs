use crate::error::{Error, Result};
use crate::geometry::{angle_deg, Point};

/// Cost of pairing neighbour `g` of `g_i` with neighbour `h` of `h_j`.
///
/// Sum of the angle at `h_j` between `g` and `h` (degrees divided by 90) and
/// the relative difference of the two spoke lengths, relative to `|g_i g|`.
pub fn neighbor_energy(g_i: Point, g: Point, h_j: Point, h: Point) -> Result<f64> {
    let radius_g = g_i.distance(g);
    if radius_g == 0.0 {
        return Err(Error::Degenerate("neighbour coincides with its centre".into()));
    }
    let angle =
        angle_deg(g, h_j, h).ok_or_else(|| Error::Degenerate("angle undefined for a zero-length ray".into()))?;
    Ok(angle / 90.0 + (radius_g - h_j.distance(h)).abs() / radius_g)
}

/// Variant used inside the matcher: a zero-length ray (a source neighbour lying
/// exactly on the candidate centre) is scored as the maximal angle of 180 degrees.
pub(crate) fn neighbor_energy_lenient(g_i: Point, g: Point, h_j: Point, h: Point) -> f64 {
    let radius_g = g_i.distance(g);
    let angle = angle_deg(g, h_j, h).unwrap_or(180.0);
    angle / 90.0 + (radius_g - h_j.distance(h)).abs() / radius_g
}

#[cfg(test)]
mod tests {
    use super::*;

    const O: Point = Point::new(0.0, 0.0);

    #[test]
    fn worked_examples() {
        let e = neighbor_energy(O, Point::new(100.0, 0.0), O, Point::new(100.0, 0.0)).unwrap();
        assert_eq!(e, 0.0);
        let e = neighbor_energy(O, Point::new(100.0, 0.0), O, Point::new(0.0, 100.0)).unwrap();
        assert!((e - 1.0).abs() < 1e-12);
        let e = neighbor_energy(O, Point::new(100.0, 0.0), O, Point::new(200.0, 0.0)).unwrap();
        assert!((e - 1.0).abs() < 1e-12);
    }

    #[test]
    fn degenerate_inputs() {
        assert!(neighbor_energy(O, O, O, Point::new(1.0, 0.0)).is_err());
        assert!(neighbor_energy(O, Point::new(1.0, 0.0), Point::new(1.0, 0.0), Point::new(2.0, 0.0)).is_err());
        assert!(neighbor_energy(O, Point::new(1.0, 0.0), O, O).is_err());
        let e = neighbor_energy_lenient(O, Point::new(1.0, 0.0), Point::new(1.0, 0.0), Point::new(2.0, 0.0));
        assert_eq!(e, 2.0);
    }
}
