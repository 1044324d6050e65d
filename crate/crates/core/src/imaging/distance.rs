//! Exact Euclidean distance transform (Felzenszwalb & Huttenlocher lower
//! envelope of parabolas), with everything outside the raster treated as
//! background.

use super::{BinaryMask, DistanceMap, Plane};

/// Distance from each foreground pixel to the nearest background pixel.
/// Background pixels map to 0.
pub fn distance_transform(mask: &BinaryMask) -> DistanceMap {
    let (w, h) = (mask.width(), mask.height());
    // Pad by one background pixel on every side; the nearest out-of-bounds
    // pixel always lies on that ring.
    let (pw, ph) = (w + 2, h + 2);
    let inside =
        |px: usize, py: usize| px >= 1 && py >= 1 && px <= w && py <= h && mask.get(px - 1, py - 1);

    // Column pass: squared vertical distance to the nearest background pixel.
    let mut col = vec![0i64; pw * ph];
    for x in 0..pw {
        let mut last: Option<usize> = None;
        for y in 0..ph {
            if !inside(x, y) {
                last = Some(y);
            }
            col[y * pw + x] = last.map_or(i64::MAX, |l| (y - l) as i64);
        }
        let mut last: Option<usize> = None;
        for y in (0..ph).rev() {
            if !inside(x, y) {
                last = Some(y);
            }
            let down = last.map_or(i64::MAX, |l| (l - y) as i64);
            let d = col[y * pw + x].min(down);
            col[y * pw + x] = d * d;
        }
    }

    // Row pass: lower envelope of parabolas.
    let mut out = Plane::filled(w, h, 0.0f64);
    let mut f = vec![0i64; pw];
    let mut d = vec![0i64; pw];
    let mut v = vec![0usize; pw];
    let mut z = vec![0f64; pw + 1];
    for y in 1..=h {
        f.copy_from_slice(&col[y * pw..(y + 1) * pw]);
        lower_envelope(&f, &mut d, &mut v, &mut z);
        for x in 1..=w {
            if inside(x, y) {
                out.set(x - 1, y - 1, (d[x] as f64).sqrt());
            }
        }
    }
    out
}

fn lower_envelope(f: &[i64], d: &mut [i64], v: &mut [usize], z: &mut [f64]) {
    let n = f.len();
    let intersect = |q: usize, p: usize| -> f64 {
        let (q2, p2) = ((q * q) as i64, (p * p) as i64);
        ((f[q] + q2) - (f[p] + p2)) as f64 / (2 * q as i64 - 2 * p as i64) as f64
    };
    let mut k = 0usize;
    v[0] = 0;
    z[0] = f64::NEG_INFINITY;
    z[1] = f64::INFINITY;
    for q in 1..n {
        let mut s = intersect(q, v[k]);
        while s <= z[k] {
            k -= 1;
            s = intersect(q, v[k]);
        }
        k += 1;
        v[k] = q;
        z[k] = s;
        z[k + 1] = f64::INFINITY;
    }
    k = 0;
    for q in 0..n {
        while z[k + 1] < q as f64 {
            k += 1;
        }
        let dq = q as i64 - v[k] as i64;
        d[q] = dq * dq + f[v[k]];
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_pixel() {
        let m = BinaryMask::from_fn(5, 5, |x, y| x == 2 && y == 2);
        let d = distance_transform(&m);
        assert_eq!(d.get(2, 2), 1.0);
        assert_eq!(d.get(0, 0), 0.0);
    }

    #[test]
    fn full_foreground_uses_border() {
        let d = distance_transform(&BinaryMask::filled(5, 5, true));
        assert_eq!(d.get(2, 2), 3.0);
        assert_eq!(d.get(0, 0), 1.0);
        assert_eq!(d.get(1, 2), 2.0);
    }

    #[test]
    fn diagonal_distance() {
        // background only at (0,0) inside a large mask; border is far for (3,4)
        let m = BinaryMask::from_fn(30, 30, |x, y| !(x == 10 && y == 10));
        let d = distance_transform(&m);
        assert_eq!(d.get(13, 14), 5.0);
    }
}
