use super::GreyImage;

/// Closed 8-connected outer border of a dark region, in tracing order
/// (clockwise as displayed).
#[derive(Debug, Clone, PartialEq)]
pub struct Contour {
    pub points: Vec<(i32, i32)>,
}

impl Contour {
    /// Shoelace area of the polygon through the contour pixel centres.
    pub fn area(&self) -> f64 {
        signed_area(&self.points).abs()
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn bounding_box(&self) -> (i32, i32, i32, i32) {
        let mut b = (i32::MAX, i32::MAX, i32::MIN, i32::MIN);
        for &(x, y) in &self.points {
            b.0 = b.0.min(x);
            b.1 = b.1.min(y);
            b.2 = b.2.max(x);
            b.3 = b.3.max(y);
        }
        b
    }
}

pub(crate) fn signed_area(points: &[(i32, i32)]) -> f64 {
    let n = points.len();
    let mut acc = 0i64;
    for i in 0..n {
        let (x0, y0) = points[i];
        let (x1, y1) = points[(i + 1) % n];
        acc += x0 as i64 * y1 as i64 - x1 as i64 * y0 as i64;
    }
    acc as f64 / 2.0
}

/// Moore neighbourhood, clockwise as displayed (y grows downwards),
/// starting west.
const MOORE: [(i32, i32); 8] = [(-1, 0), (-1, -1), (0, -1), (1, -1), (1, 0), (1, 1), (0, 1), (-1, 1)];

fn direction_index(dx: i32, dy: i32) -> usize {
    MOORE.iter().position(|&d| d == (dx, dy)).expect("not a Moore neighbour")
}

/// Connected component of dark pixels.
#[derive(Debug, Clone)]
pub(crate) struct Component {
    pub label: u32,
    /// First pixel in raster order; its west neighbour is background.
    pub start: (i32, i32),
    pub pixel_count: usize,
    pub bbox: (i32, i32, i32, i32),
}

/// 8-connected labelling. `labels[i] == 0` means background; component
/// `k` carries label `k + 1`.
pub(crate) fn label_components(width: usize, height: usize, is_dark: impl Fn(usize) -> bool) -> (Vec<u32>, Vec<Component>) {
    let mut labels = vec![0u32; width * height];
    let mut comps = Vec::new();
    let mut stack = Vec::new();
    for idx in 0..width * height {
        if labels[idx] != 0 || !is_dark(idx) {
            continue;
        }
        let label = comps.len() as u32 + 1;
        let (sx, sy) = ((idx % width) as i32, (idx / width) as i32);
        let mut count = 0usize;
        let mut bbox = (sx, sy, sx, sy);
        labels[idx] = label;
        stack.push(idx);
        while let Some(i) = stack.pop() {
            count += 1;
            let (x, y) = ((i % width) as i32, (i / width) as i32);
            bbox = (bbox.0.min(x), bbox.1.min(y), bbox.2.max(x), bbox.3.max(y));
            for &(dx, dy) in &MOORE {
                let (nx, ny) = (x + dx, y + dy);
                if nx < 0 || ny < 0 || nx >= width as i32 || ny >= height as i32 {
                    continue;
                }
                let j = ny as usize * width + nx as usize;
                if labels[j] == 0 && is_dark(j) {
                    labels[j] = label;
                    stack.push(j);
                }
            }
        }
        comps.push(Component { label, start: (sx, sy), pixel_count: count, bbox });
    }
    (labels, comps)
}

/// Moore-neighbour border following from `start`, whose west neighbour must
/// be outside the region. Stops when the first move is about to repeat.
pub(crate) fn trace_outline(start: (i32, i32), inside: impl Fn(i32, i32) -> bool) -> Vec<(i32, i32)> {
    let mut points = vec![start];
    let mut p = start;
    // Index of the background neighbour we arrived from, relative to `p`.
    let mut back = 0usize;
    let mut first_move: Option<(i32, i32)> = None;
    loop {
        let mut next = None;
        for k in 1..=8 {
            let d = (back + k) % 8;
            let q = (p.0 + MOORE[d].0, p.1 + MOORE[d].1);
            if inside(q.0, q.1) {
                next = Some((d, q));
                break;
            }
        }
        let Some((d, q)) = next else {
            return points; // isolated pixel
        };
        if p == start {
            match first_move {
                None => first_move = Some(q),
                Some(f) if f == q => {
                    points.pop(); // `start` was pushed again on arrival
                    return points;
                }
                Some(_) => {}
            }
        }
        let prev = (d + 7) % 8;
        let b = (p.0 + MOORE[prev].0, p.1 + MOORE[prev].1);
        back = direction_index(b.0 - q.0, b.1 - q.1);
        p = q;
        points.push(p);
        if points.len() > 16 * 1024 * 1024 {
            return points;
        }
    }
}

/// Outer borders of all dark (value 0) 8-connected regions, largest
/// enclosed area first. Regions whose border has fewer than 4 points are
/// dropped.
pub fn trace_contours(binary: &GreyImage) -> Vec<Contour> {
    let (w, h) = (binary.width(), binary.height());
    let data = binary.data();
    let (labels, comps) = label_components(w, h, |i| data[i] == 0);
    let mut contours: Vec<Contour> = comps
        .iter()
        .filter_map(|c| {
            let lbl = c.label;
            let pts = trace_outline(c.start, |x, y| x >= 0 && y >= 0 && (x as usize) < w && (y as usize) < h && labels[y as usize * w + x as usize] == lbl);
            (pts.len() >= 4).then_some(Contour { points: pts })
        })
        .collect();
    contours.sort_by(|a, b| b.area().total_cmp(&a.area()).then_with(|| a.points[0].1.cmp(&b.points[0].1)).then_with(|| a.points[0].0.cmp(&b.points[0].0)));
    contours
}
