use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::{BinaryMask, LabelMap, Plane};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Connectivity {
    #[serde(rename = "4")]
    Four,
    #[serde(rename = "8")]
    Eight,
}

impl Connectivity {
    pub(crate) fn offsets(self) -> &'static [(isize, isize)] {
        match self {
            Connectivity::Four => &[(0, -1), (-1, 0), (1, 0), (0, 1)],
            Connectivity::Eight => &[
                (-1, -1),
                (0, -1),
                (1, -1),
                (-1, 0),
                (1, 0),
                (-1, 1),
                (0, 1),
                (1, 1),
            ],
        }
    }
}

/// Labels maximal connected foreground regions `1..=k` in the raster order of
/// each region's first pixel.
pub fn connected_components(mask: &BinaryMask, connectivity: Connectivity) -> LabelMap {
    let (w, h) = (mask.width(), mask.height());
    let mut labels = Plane::filled(w, h, 0u32);
    let mut next = 0u32;
    let mut queue = VecDeque::new();
    for start in 0..w * h {
        if !mask.as_slice()[start] || labels.as_slice()[start] != 0 {
            continue;
        }
        next += 1;
        labels.as_mut_slice()[start] = next;
        queue.push_back(start);
        while let Some(idx) = queue.pop_front() {
            let (x, y) = ((idx % w) as isize, (idx / w) as isize);
            for &(dx, dy) in connectivity.offsets() {
                let (nx, ny) = (x + dx, y + dy);
                if nx < 0 || ny < 0 || nx >= w as isize || ny >= h as isize {
                    continue;
                }
                let n = ny as usize * w + nx as usize;
                if mask.as_slice()[n] && labels.as_slice()[n] == 0 {
                    labels.as_mut_slice()[n] = next;
                    queue.push_back(n);
                }
            }
        }
    }
    LabelMap::from_parts_unchecked(labels, next)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn two_blocks() {
        let m = BinaryMask::from_fn(10, 5, |x, y| y < 3 && (x < 3 || (5..8).contains(&x)));
        let cc = connected_components(&m, Connectivity::Four);
        assert_eq!(cc.num_labels(), 2);
        assert_eq!(cc.get(0, 0), 1);
        assert_eq!(cc.get(6, 1), 2);
        assert_eq!(cc.get(4, 1), 0);
    }

    #[test]
    fn empty_mask() {
        let cc = connected_components(&BinaryMask::filled(4, 4, false), Connectivity::Eight);
        assert_eq!(cc.num_labels(), 0);
    }

    #[test]
    fn diagonal_pair() {
        let m = BinaryMask::from_fn(2, 2, |x, y| x == y);
        assert_eq!(
            connected_components(&m, Connectivity::Eight).num_labels(),
            1
        );
        assert_eq!(connected_components(&m, Connectivity::Four).num_labels(), 2);
    }

    #[test]
    fn first_encounter_order() {
        // region B starts on row 0 further right, region A wraps around to row 0 earlier
        let m = BinaryMask::new(
            5,
            3,
            vec![
                true, false, false, true, false, //
                true, false, false, false, false, //
                true, true, false, false, false,
            ],
        )
        .unwrap();
        let cc = connected_components(&m, Connectivity::Four);
        assert_eq!(cc.get(0, 2), 1);
        assert_eq!(cc.get(3, 0), 2);
    }

    /// Union-find over the same adjacency, independent of the BFS above.
    fn partition_oracle(m: &BinaryMask, conn: Connectivity) -> Vec<usize> {
        let (w, h) = (m.width(), m.height());
        let mut parent: Vec<usize> = (0..w * h).collect();
        fn find(p: &mut [usize], mut i: usize) -> usize {
            while p[i] != i {
                p[i] = p[p[i]];
                i = p[i];
            }
            i
        }
        for y in 0..h {
            for x in 0..w {
                if !m.get(x, y) {
                    continue;
                }
                for &(dx, dy) in conn.offsets() {
                    let (nx, ny) = (x as isize + dx, y as isize + dy);
                    let inside = nx >= 0 && ny >= 0 && (nx as usize) < w && (ny as usize) < h;
                    if inside && m.get(nx as usize, ny as usize) {
                        let a = find(&mut parent, y * w + x);
                        let b = find(&mut parent, ny as usize * w + nx as usize);
                        parent[a] = b;
                    }
                }
            }
        }
        (0..w * h).map(|i| find(&mut parent, i)).collect()
    }

    proptest! {
        #[test]
        fn partition_matches_union_find(
            (w, h, data) in (1usize..16, 1usize..16).prop_flat_map(|(w, h)| {
                (Just(w), Just(h), proptest::collection::vec(any::<bool>(), w * h))
            }),
            eight in any::<bool>(),
        ) {
            let m = BinaryMask::new(w, h, data).unwrap();
            let conn = if eight { Connectivity::Eight } else { Connectivity::Four };
            let cc = connected_components(&m, conn);
            let roots = partition_oracle(&m, conn);
            let labels = cc.as_plane().as_slice();
            for i in 0..w * h {
                prop_assert_eq!(labels[i] != 0, m.as_slice()[i]);
                for j in 0..w * h {
                    if labels[i] != 0 && labels[j] != 0 {
                        prop_assert_eq!(labels[i] == labels[j], roots[i] == roots[j]);
                    }
                }
            }
            // ids are dense and assigned in first-encounter order
            let mut next = 1;
            for &l in labels {
                if l != 0 {
                    prop_assert!(l <= next);
                    if l == next { next += 1; }
                }
            }
            prop_assert_eq!(next - 1, cc.num_labels());
        }
    }
}
