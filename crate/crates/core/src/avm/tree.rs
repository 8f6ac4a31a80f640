use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum SplitCondition {
    /// `value <= threshold` goes left.
    Threshold(f64),
    /// Codes in the set go left.
    Categories(Vec<u32>),
}

impl SplitCondition {
    pub fn goes_left(&self, value: f64) -> bool {
        match self {
            SplitCondition::Threshold(t) => value <= *t,
            SplitCondition::Categories(codes) => codes.contains(&(value as u32)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum TreeNode {
    Split {
        feature: usize,
        condition: SplitCondition,
        /// Where a Missing value goes.
        default_left: bool,
        left: usize,
        right: usize,
    },
    Leaf {
        value: f64,
        count: usize,
    },
}

/// A regression tree stored as a node arena; node 0 is the root.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub(crate) nodes: Vec<TreeNode>,
}

impl Tree {
    pub fn nodes(&self) -> &[TreeNode] {
        &self.nodes
    }

    pub fn leaf_count(&self) -> usize {
        self.nodes
            .iter()
            .filter(|n| matches!(n, TreeNode::Leaf { .. }))
            .count()
    }

    /// Index of the leaf an encoded row lands in.
    pub fn leaf_index(&self, row: &[Option<f64>]) -> usize {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                TreeNode::Leaf { .. } => return i,
                TreeNode::Split {
                    feature,
                    condition,
                    default_left,
                    left,
                    right,
                } => {
                    let go_left = match row[*feature] {
                        Some(v) => condition.goes_left(v),
                        None => *default_left,
                    };
                    i = if go_left { *left } else { *right };
                }
            }
        }
    }

    pub fn predict(&self, row: &[Option<f64>]) -> f64 {
        match &self.nodes[self.leaf_index(row)] {
            TreeNode::Leaf { value, .. } => *value,
            TreeNode::Split { .. } => unreachable!("leaf_index stops at a leaf"),
        }
    }
}
