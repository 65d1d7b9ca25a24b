//! Small hand-made operators with known closed-form behaviour.
//!
//! `toy3` is a three-node graph: one interior node (index 0) joined to two
//! strip nodes (indices 1 and 2), all weights and measures equal to one.

use std::sync::Arc;

use crate::geometry::{DomainBox, Grid, GridOptions, NodeClass};
use crate::kernel::{EdgeMode, KernelSpec, NonlocalOperator};

fn toy3_grid() -> Arc<Grid> {
    let grid = Grid::from_parts(
        DomainBox::unit(1).expect("unit box"),
        1.0,
        0.25,
        vec![[0.5, 0.0], [0.25, 0.0], [0.75, 0.0]],
        vec![NodeClass::Interior, NodeClass::Strip, NodeClass::Strip],
        vec![1.0; 3],
        vec![0.5, 0.25, 0.25],
        GridOptions::default(),
    )
    .expect("toy3 grid");
    Arc::new(grid)
}

/// Unit-weight triangle.
pub fn toy3(mode: EdgeMode) -> NonlocalOperator {
    toy3_weighted(1.0, 1.0, mode)
}

/// Triangle with interior-strip weights `w1` (to node 1) and `w2` (to node 2);
/// the strip-strip weight stays 1.
pub fn toy3_weighted(w1: f64, w2: f64, mode: EdgeMode) -> NonlocalOperator {
    let w = vec![vec![0.0, w1, w2], vec![w1, 0.0, 1.0], vec![w2, 1.0, 0.0]];
    NonlocalOperator::from_weights(toy3_grid(), placeholder_kernel(), mode, &w)
        .expect("toy3 operator")
}

/// Two strip nodes, no interior, joined by a unit weight.
pub fn strip_pair(mode: EdgeMode) -> NonlocalOperator {
    let grid = Grid::from_parts(
        DomainBox::unit(1).expect("unit box"),
        1.0,
        0.5,
        vec![[0.25, 0.0], [0.75, 0.0]],
        vec![NodeClass::Strip; 2],
        vec![1.0; 2],
        vec![0.25, 0.25],
        GridOptions {
            allow_empty_interior: true,
        },
    )
    .expect("pair grid");
    let w = vec![vec![0.0, 1.0], vec![1.0, 0.0]];
    NonlocalOperator::from_weights(Arc::new(grid), placeholder_kernel(), mode, &w)
        .expect("pair operator")
}

// Fixture weights bypass kernel evaluation; the kernel only marks the family as smooth.
fn placeholder_kernel() -> KernelSpec {
    KernelSpec::tent(1.0, 1).expect("tent")
}
