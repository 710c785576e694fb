use std::collections::HashMap;

use super::SemanticId;
use crate::error::{Error, Result};

pub type NodeId = usize;

#[derive(Debug, Clone, Default)]
struct Node {
    /// Sorted by token value.
    children: Vec<(u16, NodeId)>,
    subtree_items: u32,
    item: Option<u32>,
}

/// Prefix trie over `(c_1, .., c_D, disamb)`. Depth `D` code levels plus one
/// disambiguation level whose nodes are the item leaves.
#[derive(Debug, Clone)]
pub struct SidTrie {
    nodes: Vec<Node>,
    depth: usize,
    leaves: HashMap<u32, NodeId>,
    sids: HashMap<u32, SemanticId>,
    max_disamb: u16,
}

pub fn build_trie(items: &[(u32, SemanticId)]) -> Result<SidTrie> {
    let depth = items.first().map_or(0, |(_, s)| s.depth());
    let mut trie = SidTrie {
        nodes: vec![Node::default()],
        depth,
        leaves: HashMap::with_capacity(items.len()),
        sids: HashMap::with_capacity(items.len()),
        max_disamb: 0,
    };
    for (item, sid) in items {
        trie.insert(*item, sid)?;
    }
    Ok(trie)
}

impl SidTrie {
    fn insert(&mut self, item: u32, sid: &SemanticId) -> Result<()> {
        if sid.depth() != self.depth {
            return Err(Error::Config(format!("item {item} has {} codes, expected {}", sid.depth(), self.depth)));
        }
        if self.leaves.contains_key(&item) {
            return Err(Error::Config(format!("item {item} listed twice")));
        }
        if let Some(existing) = self.resolve(&sid.codes, sid.disamb) {
            return Err(Error::DuplicateSemanticId {
                codes: sid.codes.clone(),
                disamb: sid.disamb,
                first: existing,
                second: item,
            });
        }

        let mut node = 0;
        self.nodes[0].subtree_items += 1;
        for &tok in sid.codes.iter().chain(std::iter::once(&sid.disamb)) {
            node = match self.child(node, tok) {
                Some(c) => c,
                None => {
                    let id = self.nodes.len();
                    self.nodes.push(Node::default());
                    let kids = &mut self.nodes[node].children;
                    let pos = kids.partition_point(|(t, _)| *t < tok);
                    kids.insert(pos, (tok, id));
                    id
                }
            };
            self.nodes[node].subtree_items += 1;
        }
        self.nodes[node].item = Some(item);
        self.leaves.insert(item, node);
        self.sids.insert(item, sid.clone());
        self.max_disamb = self.max_disamb.max(sid.disamb);
        Ok(())
    }

    pub fn root(&self) -> NodeId {
        0
    }

    /// Number of code levels `D` (the disambiguation level is extra).
    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn len(&self) -> usize {
        self.leaves.len()
    }

    pub fn is_empty(&self) -> bool {
        self.leaves.is_empty()
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn max_disamb(&self) -> u16 {
        self.max_disamb
    }

    pub fn child(&self, node: NodeId, token: u16) -> Option<NodeId> {
        let kids = &self.nodes[node].children;
        kids.binary_search_by_key(&token, |(t, _)| *t).ok().map(|i| kids[i].1)
    }

    pub fn children(&self, node: NodeId) -> &[(u16, NodeId)] {
        &self.nodes[node].children
    }

    pub fn subtree_count(&self, node: NodeId) -> u32 {
        self.nodes[node].subtree_items
    }

    /// Item stored at a leaf.
    pub fn item(&self, node: NodeId) -> Option<u32> {
        self.nodes[node].item
    }

    pub fn leaf_of(&self, item: u32) -> Option<NodeId> {
        self.leaves.get(&item).copied()
    }

    pub fn sid_of(&self, item: u32) -> Option<&SemanticId> {
        self.sids.get(&item)
    }

    pub fn node_for_prefix(&self, prefix: &[u16]) -> Option<NodeId> {
        prefix.iter().try_fold(self.root(), |node, &tok| self.child(node, tok))
    }

    pub fn resolve(&self, codes: &[u16], disamb: u16) -> Option<u32> {
        let node = self.node_for_prefix(codes)?;
        self.child(node, disamb).and_then(|leaf| self.item(leaf))
    }

    /// Node ids along the path of `item`, root excluded, leaf included.
    pub fn path_nodes(&self, item: u32) -> Option<Vec<NodeId>> {
        let sid = self.sids.get(&item)?;
        let mut node = self.root();
        let mut out = Vec::with_capacity(self.depth + 1);
        for &tok in sid.codes.iter().chain(std::iter::once(&sid.disamb)) {
            node = self.child(node, tok)?;
            out.push(node);
        }
        Some(out)
    }

    /// Every item in depth-first, token-ascending order.
    pub fn enumerate(&self) -> Vec<(u32, SemanticId)> {
        let mut out = Vec::with_capacity(self.len());
        let mut path = Vec::with_capacity(self.depth + 1);
        self.walk(self.root(), &mut path, &mut out);
        out
    }

    fn walk(&self, node: NodeId, path: &mut Vec<u16>, out: &mut Vec<(u32, SemanticId)>) {
        if let Some(item) = self.nodes[node].item {
            let (codes, disamb) = path.split_at(self.depth);
            out.push((item, SemanticId::new(codes.to_vec(), disamb[0])));
        }
        for &(tok, child) in &self.nodes[node].children {
            path.push(tok);
            self.walk(child, path, out);
            path.pop();
        }
    }
}
