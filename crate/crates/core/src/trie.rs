use crate::vocab::{TokenId, Vocabulary};

const NO_NODE: u32 = u32::MAX;

#[derive(Debug, Clone, Default)]
struct Node {
    /// Sorted by label.
    children: Vec<(char, u32)>,
    token: Option<TokenId>,
    depth: u32,
}

/// Character trie over vocabulary surfaces. Terminal nodes carry token ids.
#[derive(Debug, Clone)]
pub struct PrefixTrie {
    nodes: Vec<Node>,
    /// Root children for ASCII labels, indexed by byte value.
    ascii_root: Vec<u32>,
    max_depth: usize,
}

impl PrefixTrie {
    pub fn build(vocab: &Vocabulary) -> Self {
        let mut trie = PrefixTrie {
            nodes: vec![Node::default()],
            ascii_root: vec![NO_NODE; 128],
            max_depth: 0,
        };
        for token in vocab.tokens() {
            trie.insert(&token.surface, token.id);
        }
        for (label, child) in trie.nodes[0].children.clone() {
            if label.is_ascii() {
                trie.ascii_root[label as usize] = child;
            }
        }
        trie
    }

    fn insert(&mut self, surface: &str, id: TokenId) {
        let mut node = 0usize;
        for (depth, c) in surface.chars().enumerate() {
            node = match self.nodes[node].children.binary_search_by_key(&c, |&(l, _)| l) {
                Ok(i) => self.nodes[node].children[i].1 as usize,
                Err(i) => {
                    let child = self.nodes.len();
                    self.nodes.push(Node {
                        depth: depth as u32 + 1,
                        ..Node::default()
                    });
                    self.nodes[node].children.insert(i, (c, child as u32));
                    child
                }
            };
        }
        self.nodes[node].token = Some(id);
        self.max_depth = self.max_depth.max(self.nodes[node].depth as usize);
    }

    #[inline]
    fn child(&self, node: usize, c: char) -> Option<usize> {
        if node == 0 && c.is_ascii() {
            let n = self.ascii_root[c as usize];
            return (n != NO_NODE).then_some(n as usize);
        }
        let children = &self.nodes[node].children;
        children
            .binary_search_by_key(&c, |&(l, _)| l)
            .ok()
            .map(|i| children[i].1 as usize)
    }

    /// Longest surface that is a prefix of `text`, as `(id, length in chars)`.
    #[inline]
    pub fn longest_match(&self, text: &[char]) -> Option<(TokenId, usize)> {
        let mut node = 0;
        let mut best = None;
        for (i, &c) in text.iter().enumerate() {
            match self.child(node, c) {
                Some(next) => node = next,
                None => break,
            }
            if let Some(id) = self.nodes[node].token {
                best = Some((id, i + 1));
            }
        }
        best
    }

    /// Token id for an exact surface.
    pub fn get(&self, surface: &str) -> Option<TokenId> {
        let mut node = 0;
        for c in surface.chars() {
            node = self.child(node, c)?;
        }
        self.nodes[node].token
    }

    pub fn max_depth(&self) -> usize {
        self.max_depth
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    /// `(token id, depth)` for every terminal node, in node order.
    pub fn terminals(&self) -> impl Iterator<Item = (TokenId, usize)> + '_ {
        self.nodes
            .iter()
            .filter_map(|n| n.token.map(|id| (id, n.depth as usize)))
    }

    /// Reconstructs the surface spelled by each terminal's path.
    pub fn surfaces(&self) -> Vec<(TokenId, String)> {
        let mut out = Vec::new();
        let mut stack = vec![(0usize, String::new())];
        while let Some((node, prefix)) = stack.pop() {
            if let Some(id) = self.nodes[node].token {
                out.push((id, prefix.clone()));
            }
            for &(c, child) in &self.nodes[node].children {
                let mut s = prefix.clone();
                s.push(c);
                stack.push((child as usize, s));
            }
        }
        out.sort();
        out
    }
}
