//! Bulk-loaded 2D rectangle index (sort-tile-recursive packing) over box
//! footprints. Queries return exactly the entries whose rectangles
//! intersect the probe rectangle.

/// Axis-aligned BEV rectangle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rect {
    pub min_x: f64,
    pub min_y: f64,
    pub max_x: f64,
    pub max_y: f64,
}

impl Rect {
    pub fn new(min_x: f64, min_y: f64, max_x: f64, max_y: f64) -> Self {
        Rect {
            min_x,
            min_y,
            max_x,
            max_y,
        }
    }

    pub fn from_bounds(b: [f64; 4]) -> Self {
        Rect::new(b[0], b[1], b[2], b[3])
    }

    pub fn intersects(&self, other: &Rect) -> bool {
        self.min_x <= other.max_x
            && other.min_x <= self.max_x
            && self.min_y <= other.max_y
            && other.min_y <= self.max_y
    }

    fn union(&self, other: &Rect) -> Rect {
        Rect {
            min_x: self.min_x.min(other.min_x),
            min_y: self.min_y.min(other.min_y),
            max_x: self.max_x.max(other.max_x),
            max_y: self.max_y.max(other.max_y),
        }
    }

    fn center_x(&self) -> f64 {
        (self.min_x + self.max_x) / 2.0
    }

    fn center_y(&self) -> f64 {
        (self.min_y + self.max_y) / 2.0
    }
}

const NODE_SIZE: usize = 8;

#[derive(Debug)]
enum Node {
    Leaf { rect: Rect, entries: Vec<(Rect, usize)> },
    Inner { rect: Rect, children: Vec<usize> },
}

impl Node {
    fn rect(&self) -> &Rect {
        match self {
            Node::Leaf { rect, .. } | Node::Inner { rect, .. } => rect,
        }
    }
}

/// Static R-tree over `(rect, id)` pairs.
#[derive(Debug)]
pub struct RTreeIndex {
    nodes: Vec<Node>,
    root: Option<usize>,
}

impl RTreeIndex {
    /// Packs the entries bottom-up: sort by x center, tile into vertical
    /// strips, sort each strip by y center and cut into leaves.
    pub fn bulk_load(mut entries: Vec<(Rect, usize)>) -> Self {
        let mut nodes = Vec::new();
        if entries.is_empty() {
            return RTreeIndex { nodes, root: None };
        }

        entries.sort_by(|a, b| {
            a.0.center_x()
                .total_cmp(&b.0.center_x())
                .then_with(|| a.1.cmp(&b.1))
        });
        let leaf_count = entries.len().div_ceil(NODE_SIZE);
        let strip_count = (leaf_count as f64).sqrt().ceil() as usize;
        let per_strip = entries.len().div_ceil(strip_count);

        let mut level: Vec<usize> = Vec::new();
        for strip in entries.chunks_mut(per_strip.max(1)) {
            strip.sort_by(|a, b| {
                a.0.center_y()
                    .total_cmp(&b.0.center_y())
                    .then_with(|| a.1.cmp(&b.1))
            });
            for chunk in strip.chunks(NODE_SIZE) {
                let rect = chunk
                    .iter()
                    .skip(1)
                    .fold(chunk[0].0, |acc, e| acc.union(&e.0));
                nodes.push(Node::Leaf {
                    rect,
                    entries: chunk.to_vec(),
                });
                level.push(nodes.len() - 1);
            }
        }

        while level.len() > 1 {
            let mut next = Vec::new();
            for group in level.chunks(NODE_SIZE) {
                let rect = group
                    .iter()
                    .skip(1)
                    .fold(*nodes[group[0]].rect(), |acc, &i| acc.union(nodes[i].rect()));
                nodes.push(Node::Inner {
                    rect,
                    children: group.to_vec(),
                });
                next.push(nodes.len() - 1);
            }
            level = next;
        }

        let root = Some(level[0]);
        RTreeIndex { nodes, root }
    }

    /// Ids of all entries whose rectangle intersects `probe`.
    pub fn query(&self, probe: &Rect) -> Vec<usize> {
        let mut out = Vec::new();
        let Some(root) = self.root else {
            return out;
        };
        let mut stack = vec![root];
        while let Some(idx) = stack.pop() {
            match &self.nodes[idx] {
                Node::Leaf { rect, entries } => {
                    if rect.intersects(probe) {
                        for (r, id) in entries {
                            if r.intersects(probe) {
                                out.push(*id);
                            }
                        }
                    }
                }
                Node::Inner { rect, children } => {
                    if rect.intersects(probe) {
                        stack.extend_from_slice(children);
                    }
                }
            }
        }
        out
    }
}
