use super::{Branch, ModelError, Violation};

/// Parent/child structure of a radial network rooted at node 0.
#[derive(Debug, Clone, PartialEq)]
pub struct Topology {
    /// Branch feeding each node; `None` for the root.
    pub parent_branch: Vec<Option<usize>>,
    /// Branches leaving each node.
    pub child_branches: Vec<Vec<usize>>,
    /// Nodes in breadth-first order from the root.
    pub order: Vec<usize>,
}

impl Topology {
    pub fn new(nodes: usize, branches: &[Branch]) -> Result<Self, ModelError> {
        let v = tree_violations(nodes, branches);
        if !v.is_empty() {
            return Err(ModelError::Invalid(v));
        }
        let mut parent_branch = vec![None; nodes];
        let mut child_branches = vec![Vec::new(); nodes];
        for (b, br) in branches.iter().enumerate() {
            parent_branch[br.to] = Some(b);
            child_branches[br.from].push(b);
        }
        let mut order = vec![0];
        let mut k = 0;
        while k < order.len() {
            let i = order[k];
            for &b in &child_branches[i] {
                order.push(branches[b].to);
            }
            k += 1;
        }
        Ok(Self {
            parent_branch,
            child_branches,
            order,
        })
    }

    /// Branches on the path from the root down to `node`, root side first.
    pub fn path(&self, node: usize, branches: &[Branch]) -> Vec<usize> {
        let mut path = Vec::new();
        let mut j = node;
        while let Some(b) = self.parent_branch[j] {
            path.push(b);
            j = branches[b].from;
        }
        path.reverse();
        path
    }
}

/// Checks that the branches form a spanning tree oriented away from node 0.
pub(super) fn tree_violations(nodes: usize, branches: &[Branch]) -> Vec<Violation> {
    let mut out = Vec::new();
    let tree = |rule: String| Violation {
        entity: "branches".into(),
        rule,
    };
    if nodes == 0 {
        out.push(tree("network has no nodes".into()));
        return out;
    }
    for (b, br) in branches.iter().enumerate() {
        if br.from >= nodes || br.to >= nodes {
            out.push(Violation {
                entity: format!("branch {b}"),
                rule: format!("references missing node ({} -> {})", br.from, br.to),
            });
        }
        if br.from == br.to {
            out.push(Violation {
                entity: format!("branch {b}"),
                rule: "self loop".into(),
            });
        }
    }
    if !out.is_empty() {
        return out;
    }
    if branches.len() + 1 != nodes {
        out.push(tree(format!(
            "not a tree: {} branches for {} nodes",
            branches.len(),
            nodes
        )));
    }
    // union-find for cycles
    let mut root: Vec<usize> = (0..nodes).collect();
    fn find(root: &mut [usize], mut i: usize) -> usize {
        while root[i] != i {
            root[i] = root[root[i]];
            i = root[i];
        }
        i
    }
    for br in branches {
        let (a, b) = (find(&mut root, br.from), find(&mut root, br.to));
        if a == b {
            out.push(tree(format!(
                "not a tree: cycle through {} -> {}",
                br.from, br.to
            )));
            return out;
        }
        root[a] = b;
    }
    let mut fed = vec![0usize; nodes];
    for br in branches {
        fed[br.to] += 1;
    }
    if fed[0] > 0 {
        out.push(tree("node 0 must not be fed by a branch".into()));
    }
    for (i, &f) in fed.iter().enumerate().skip(1) {
        if f > 1 {
            out.push(Violation {
                entity: format!("node {i}"),
                rule: "fed by more than one branch; orient branches away from node 0".into(),
            });
        }
    }
    if out.is_empty() {
        let r = find(&mut root, 0);
        if (0..nodes).any(|i| find(&mut root, i) != r) {
            out.push(tree("not a tree: network is disconnected".into()));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::BranchKind;

    fn br(from: usize, to: usize) -> Branch {
        Branch {
            from,
            to,
            r: 0.01,
            x: 0.01,
            kind: BranchKind::Plain,
        }
    }

    #[test]
    fn star_and_chain() {
        let t = Topology::new(4, &[br(0, 1), br(1, 2), br(1, 3)]).unwrap();
        assert_eq!(t.order, vec![0, 1, 2, 3]);
        assert_eq!(t.parent_branch[3], Some(2));
        assert_eq!(t.child_branches[1], vec![1, 2]);
        assert_eq!(t.path(3, &[br(0, 1), br(1, 2), br(1, 3)]), vec![0, 2]);
    }

    #[test]
    fn cycle_is_not_a_tree() {
        let v = tree_violations(3, &[br(0, 1), br(1, 2), br(2, 0)]);
        assert!(v.iter().any(|v| v.rule.contains("not a tree")));
    }

    #[test]
    fn reversed_branch_is_reported() {
        let v = tree_violations(3, &[br(0, 1), br(2, 1)]);
        assert!(v.iter().any(|v| v.rule.contains("orient")));
    }
}
