use super::FlowField;
use crate::scalar::Real;

/// First-order kinematic fields of a flow, one value per pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct KinematicMaps<T> {
    pub width: usize,
    pub height: usize,
    pub div: Vec<T>,
    pub curl: Vec<T>,
    pub hyp1: Vec<T>,
    pub hyp2: Vec<T>,
    pub shear: Vec<T>,
}

/// Central difference along one axis; one-sided at the first and last sample.
#[inline]
fn diff<T: Real>(plane: &[T], i: usize, pos: usize, len: usize, stride: usize) -> T {
    if len < 2 {
        return T::zero();
    }
    if pos == 0 {
        plane[i + stride] - plane[i]
    } else if pos == len - 1 {
        plane[i] - plane[i - stride]
    } else {
        (plane[i + stride] - plane[i - stride]) * T::lit(0.5)
    }
}

/// div = u_x + v_y, curl = -u_y + v_x, hyp1 = u_x - v_y, hyp2 = u_y + v_x,
/// shear = sqrt(hyp1^2 + hyp2^2).
pub fn kinematic_maps<T: Real>(flow: &FlowField<T>) -> KinematicMaps<T> {
    let (w, h) = (flow.width, flow.height);
    let n = w * h;
    let mut maps = KinematicMaps {
        width: w,
        height: h,
        div: Vec::with_capacity(n),
        curl: Vec::with_capacity(n),
        hyp1: Vec::with_capacity(n),
        hyp2: Vec::with_capacity(n),
        shear: Vec::with_capacity(n),
    };
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            let ux = diff(&flow.u, i, x, w, 1);
            let uy = diff(&flow.u, i, y, h, w);
            let vx = diff(&flow.v, i, x, w, 1);
            let vy = diff(&flow.v, i, y, h, w);
            let h1 = ux - vy;
            let h2 = uy + vx;
            maps.div.push(ux + vy);
            maps.curl.push(vx - uy);
            maps.hyp1.push(h1);
            maps.hyp2.push(h2);
            maps.shear.push((h1 * h1 + h2 * h2).sqrt());
        }
    }
    maps
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn interior<T: Copy>(w: usize, h: usize, plane: &[T]) -> Vec<T> {
        (1..h - 1)
            .flat_map(|y| (1..w - 1).map(move |x| y * w + x))
            .map(|i| plane[i])
            .collect()
    }

    #[test]
    fn expansion_field() {
        let f = FlowField::from_fn(12, 10, |x, y| (0.1 * x as f64, 0.1 * y as f64));
        let m = kinematic_maps(&f);
        for v in interior(12, 10, &m.div) {
            assert!((v - 0.2).abs() < 1e-12);
        }
        for v in interior(12, 10, &m.curl)
            .into_iter()
            .chain(interior(12, 10, &m.shear))
        {
            assert!(v.abs() < 1e-12);
        }
    }

    #[test]
    fn rotation_field_has_positive_curl() {
        let f = FlowField::from_fn(12, 10, |x, y| (-0.1 * y as f64, 0.1 * x as f64));
        let m = kinematic_maps(&f);
        for v in interior(12, 10, &m.curl) {
            assert!((v - 0.2).abs() < 1e-12);
        }
        for v in interior(12, 10, &m.div)
            .into_iter()
            .chain(interior(12, 10, &m.shear))
        {
            assert!(v.abs() < 1e-12);
        }
    }

    proptest! {
        #[test]
        fn linear_in_flow(a in -3.0f64..3.0, b in -3.0f64..3.0, s1 in 0u32..100, s2 in 0u32..100) {
            let f1 = FlowField::from_fn(9, 7, |x, y| {
                let t = (x * 7 + y * 3) as f64 + s1 as f64;
                (t.sin(), (0.5 * t).cos())
            });
            let f2 = FlowField::from_fn(9, 7, |x, y| {
                let t = (x * 5 + y * 11) as f64 + s2 as f64;
                ((0.3 * t).cos(), t.sin() * 0.2)
            });
            let combo = FlowField::from_fn(9, 7, |x, y| {
                let (u1, v1) = f1.at(x, y);
                let (u2, v2) = f2.at(x, y);
                (a * u1 + b * u2, a * v1 + b * v2)
            });
            let (m1, m2, mc) = (kinematic_maps(&f1), kinematic_maps(&f2), kinematic_maps(&combo));
            for (p1, p2, pc) in [
                (&m1.div, &m2.div, &mc.div),
                (&m1.curl, &m2.curl, &mc.curl),
                (&m1.hyp1, &m2.hyp1, &mc.hyp1),
                (&m1.hyp2, &m2.hyp2, &mc.hyp2),
            ] {
                for i in 0..pc.len() {
                    prop_assert!((a * p1[i] + b * p2[i] - pc[i]).abs() < 1e-9);
                }
            }
            for i in 0..mc.shear.len() {
                prop_assert!(mc.shear[i] >= 0.0);
            }
        }
    }
}
