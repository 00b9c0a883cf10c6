//! Geometric node and edge features.
//!
//! Both functions take boxes and page size only; word text never reaches
//! this module.

use crate::error::{Error, Result};
use crate::graph::BoundingBox;

pub const NODE_DIM: usize = 4;
pub const EDGE_DIM: usize = 6;

pub type NodeFeature = [f64; NODE_DIM];
pub type EdgeFeature = [f64; EDGE_DIM];

fn check_page(width: f64, height: f64) -> Result<()> {
    if !(width > 0.0 && height > 0.0 && width.is_finite() && height.is_finite()) {
        return Err(Error::Config(format!(
            "page size must be positive, got {width} x {height}"
        )));
    }
    Ok(())
}

/// `(x_left/W, y_top/H, x_right/W, y_bottom/H)`.
pub fn node_features(b: &BoundingBox, width: f64, height: f64) -> Result<NodeFeature> {
    check_page(width, height)?;
    Ok(normalized(b, width, height))
}

fn normalized(b: &BoundingBox, width: f64, height: f64) -> NodeFeature {
    [
        b.x_left / width,
        b.y_top / height,
        b.x_right / width,
        b.y_bottom / height,
    ]
}

/// Relative spacing between two normalized boxes:
/// left-left, right-left and right-right differences along x, then the same
/// three along y.
pub fn edge_features(
    bi: &BoundingBox,
    bj: &BoundingBox,
    width: f64,
    height: f64,
) -> Result<EdgeFeature> {
    check_page(width, height)?;
    let [xi1, yi1, xi2, yi2] = normalized(bi, width, height);
    let [xj1, yj1, xj2, yj2] = normalized(bj, width, height);
    Ok([
        xi1 - xj1,
        xi2 - xj1,
        xi2 - xj2,
        yi1 - yj1,
        yi2 - yj1,
        yi2 - yj2,
    ])
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn bx(a: f64, b: f64, c: f64, d: f64) -> BoundingBox {
        BoundingBox::from_corners(a, b, c, d)
    }

    fn close(a: &[f64], b: &[f64]) -> bool {
        a.iter().zip(b).all(|(x, y)| (x - y).abs() < 1e-12)
    }

    #[test]
    fn full_page_box() {
        assert_eq!(node_features(&bx(0., 0., 50., 80.), 50., 80.).unwrap(), [0., 0., 1., 1.]);
    }

    #[test]
    fn simple_node_features() {
        let f = node_features(&bx(10., 10., 20., 20.), 100., 100.).unwrap();
        assert!(close(&f, &[0.1, 0.1, 0.2, 0.2]));
    }

    #[test]
    fn degenerate_box_is_accepted() {
        let f = node_features(&bx(30., 40., 30., 40.), 100., 200.).unwrap();
        assert!(close(&f, &[0.3, 0.2, 0.3, 0.2]));
    }

    #[test]
    fn zero_page_is_config_error() {
        assert!(matches!(
            node_features(&bx(0., 0., 1., 1.), 0., 10.),
            Err(Error::Config(_))
        ));
        assert!(edge_features(&bx(0., 0., 1., 1.), &bx(0., 0., 1., 1.), 10., 0.).is_err());
    }

    #[test]
    fn identical_boxes() {
        let b = bx(10., 10., 30., 20.);
        let d = edge_features(&b, &b, 100., 100.).unwrap();
        assert!(close(&d, &[0.0, 0.2, 0.0, 0.0, 0.1, 0.0]));
    }

    #[test]
    fn same_line_neighbours() {
        let d = edge_features(&bx(10., 10., 20., 20.), &bx(30., 10., 40., 20.), 100., 100.).unwrap();
        assert!(close(&d, &[-0.2, -0.1, -0.2, 0.0, 0.1, 0.0]));
    }

    fn arb_box() -> impl Strategy<Value = BoundingBox> {
        (0.0..400.0f64, 0.0..400.0f64, 0.0..100.0f64, 0.0..50.0f64)
            .prop_map(|(x, y, w, h)| bx(x, y, x + w, y + h))
    }

    proptest! {
        #[test]
        fn translation_invariant(a in arb_box(), b in arb_box(), dx in 0.0..100.0f64, dy in 0.0..100.0f64) {
            let (w, h) = (600.0, 600.0);
            let d0 = edge_features(&a, &b, w, h).unwrap();
            let d1 = edge_features(&a.translated(dx, dy), &b.translated(dx, dy), w, h).unwrap();
            prop_assert!(d0.iter().zip(&d1).all(|(x, y)| (x - y).abs() < 1e-12));
        }

        #[test]
        fn difference_components_are_antisymmetric(a in arb_box(), b in arb_box()) {
            let dij = edge_features(&a, &b, 500.0, 500.0).unwrap();
            let dji = edge_features(&b, &a, 500.0, 500.0).unwrap();
            for k in [0, 2, 3, 5] {
                prop_assert!((dij[k] + dji[k]).abs() < 1e-12);
            }
        }
    }
}
