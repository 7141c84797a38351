//! Memo of adaptive runs keyed by realized profiles.
//!
//! An adaptive run reads the realization only through the profiles of the
//! users it commits, so two realizations that agree on those profiles give
//! the same run. The memo is a trie over (committed user, profile index).

use alloc::vec;
use alloc::vec::Vec;

use crate::domain::{Realization, User};

pub(crate) struct PathMemo<T> {
    nodes: Vec<Node<T>>,
}

enum Node<T> {
    Branch { user: usize, children: Vec<Option<usize>> },
    Leaf(T),
}

impl<T> Default for PathMemo<T> {
    fn default() -> Self {
        PathMemo { nodes: Vec::new() }
    }
}

impl<T> PathMemo<T> {
    pub fn get(&self, r: &Realization) -> Option<&T> {
        let mut at = 0;
        loop {
            match self.nodes.get(at)? {
                Node::Leaf(v) => return Some(v),
                Node::Branch { user, children } => at = children[r.profile_index(*user)]?,
            }
        }
    }

    /// Record `value` for the run that committed `path` (in order) under `r`.
    pub fn insert(&mut self, users: &[User], path: &[usize], r: &Realization, value: T) {
        let mut value = Some(value);
        let mut make = |depth: usize| match path.get(depth) {
            Some(&u) => Node::Branch { user: u, children: vec![None; users[u].privacy_profile.len()] },
            None => Node::Leaf(value.take().expect("one leaf per path")),
        };
        if self.nodes.is_empty() {
            self.nodes.push(make(0));
        }
        let mut at = 0;
        for depth in 0..path.len() {
            let next = self.nodes.len();
            let Node::Branch { user, children } = &mut self.nodes[at] else {
                unreachable!("runs agreeing on a prefix commit the same user next");
            };
            let slot = &mut children[r.profile_index(*user)];
            match *slot {
                Some(c) => at = c,
                None => {
                    *slot = Some(next);
                    self.nodes.push(make(depth + 1));
                    at = next;
                }
            }
        }
    }
}
