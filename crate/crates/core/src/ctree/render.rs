use std::fmt::Write;

use super::{NodeKind, Tree};

/// Indented text rendering, one line per node in pre-order.
///
/// ```text
/// [1] root: n=100 (large=50, small=50) small=0.500 | split AGE, p=1.083e-05
///   [2] AGE <= 5.5: n=50 (large=50, small=0) small=0.000 | leaf
///   [3] AGE > 5.5: n=50 (large=0, small=50) small=1.000 | leaf
/// ```
pub fn render_tree(t: &Tree) -> String {
    let mut out = String::new();
    write_node(t, 0, "root".to_string(), &mut out);
    out
}

fn write_node(t: &Tree, at: usize, edge: String, out: &mut String) {
    let node = &t.nodes[at];
    let (_, p_small) = node.counts.probabilities();
    let indent = "  ".repeat(node.depth);
    let _ = write!(
        out,
        "{indent}[{}] {edge}: n={} (large={}, small={}) small={p_small:.3} | ",
        node.id,
        node.counts.total(),
        node.counts.large,
        node.counts.small,
    );
    match &node.kind {
        NodeKind::Leaf => out.push_str("leaf\n"),
        NodeKind::Split {
            test,
            split,
            left,
            right,
        } => {
            let _ = writeln!(out, "split {}, p={:.3e}", split.variable, test.p_adjusted);
            write_node(t, *left, split.describe(true), out);
            write_node(t, *right, split.describe(false), out);
        }
    }
}
