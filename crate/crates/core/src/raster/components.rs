use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::ValidityMask;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Connectivity {
    Four,
    Eight,
}

/// A maximal connected set of true pixels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Component {
    /// Row-major pixel indices, ascending.
    pub pixels: Vec<usize>,
}

impl Component {
    pub fn area(&self) -> usize {
        self.pixels.len()
    }

    pub fn first_index(&self) -> usize {
        self.pixels[0]
    }

    pub fn to_mask(&self, width: usize, height: usize) -> ValidityMask {
        let mut bits = vec![false; width * height];
        for &i in &self.pixels {
            bits[i] = true;
        }
        ValidityMask::new(width, height, bits).expect("component indices fit the raster")
    }
}

/// Components ordered by area descending, then by first row-major index.
pub fn connected_components(mask: &ValidityMask, connectivity: Connectivity) -> Vec<Component> {
    let (w, h) = (mask.width() as i64, mask.height() as i64);
    let neighbours: &[(i64, i64)] = match connectivity {
        Connectivity::Four => &[(1, 0), (-1, 0), (0, 1), (0, -1)],
        Connectivity::Eight => &[
            (1, 0),
            (-1, 0),
            (0, 1),
            (0, -1),
            (1, 1),
            (1, -1),
            (-1, 1),
            (-1, -1),
        ],
    };
    let bits = mask.bits();
    let mut seen = vec![false; bits.len()];
    let mut out = Vec::new();
    let mut queue = VecDeque::new();
    for start in 0..bits.len() {
        if !bits[start] || seen[start] {
            continue;
        }
        seen[start] = true;
        queue.push_back(start);
        let mut pixels = Vec::new();
        while let Some(i) = queue.pop_front() {
            pixels.push(i);
            let (x, y) = ((i as i64) % w, (i as i64) / w);
            for &(dx, dy) in neighbours {
                let (nx, ny) = (x + dx, y + dy);
                if nx < 0 || ny < 0 || nx >= w || ny >= h {
                    continue;
                }
                let j = (ny * w + nx) as usize;
                if bits[j] && !seen[j] {
                    seen[j] = true;
                    queue.push_back(j);
                }
            }
        }
        pixels.sort_unstable();
        out.push(Component { pixels });
    }
    out.sort_by(|a, b| {
        b.area()
            .cmp(&a.area())
            .then(a.first_index().cmp(&b.first_index()))
    });
    out
}
