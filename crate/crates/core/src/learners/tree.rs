use serde::{Deserialize, Serialize};

use crate::records::AttributeVector;

/// A binary tree over 0/1 attributes: a set flag goes right.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree<L> {
    pub(crate) nodes: Vec<Node<L>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Node<L> {
    Split { feature: u32, left: u32, right: u32 },
    Leaf(L),
}

impl<L> Tree<L> {
    pub(crate) fn new() -> Self {
        Tree { nodes: Vec::new() }
    }

    pub(crate) fn push(&mut self, node: Node<L>) -> u32 {
        self.nodes.push(node);
        (self.nodes.len() - 1) as u32
    }

    pub fn nodes(&self) -> &[Node<L>] {
        &self.nodes
    }

    /// Walk from the root using `bit(feature)`.
    #[inline]
    pub fn leaf_by(&self, bit: impl Fn(u32) -> bool) -> &L {
        let mut i = 0usize;
        loop {
            match &self.nodes[i] {
                Node::Split { feature, left, right } => {
                    i = if bit(*feature) { *right } else { *left } as usize;
                }
                Node::Leaf(l) => return l,
            }
        }
    }

    pub fn leaf(&self, x: &AttributeVector) -> &L {
        self.leaf_by(|f| x.get(f as usize))
    }

    pub fn leaves(&self) -> impl Iterator<Item = &L> {
        self.nodes.iter().filter_map(|n| match n {
            Node::Leaf(l) => Some(l),
            Node::Split { .. } => None,
        })
    }

    pub fn depth(&self) -> usize {
        fn go<L>(t: &Tree<L>, i: usize) -> usize {
            match &t.nodes[i] {
                Node::Leaf(_) => 0,
                Node::Split { left, right, .. } => 1 + go(t, *left as usize).max(go(t, *right as usize)),
            }
        }
        if self.nodes.is_empty() {
            0
        } else {
            go(self, 0)
        }
    }
}
