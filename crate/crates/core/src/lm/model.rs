use std::collections::HashMap;

use super::Vocab;

pub(crate) type NodeId = usize;
pub(crate) const ROOT: NodeId = 0;

/// One history in the reversed-context trie. Children are keyed by the word
/// one step further back in time, so backoff walks only drop the deepest
/// node.
#[derive(Debug, Clone, Default)]
pub(crate) struct Node {
    /// log10 backoff of this history; 0 when none is stored.
    pub backoff: f64,
    /// log10 P(word | this history) for stored n-grams.
    pub probs: HashMap<u32, f64>,
    pub children: HashMap<u32, NodeId>,
}

/// A backoff n-gram model. Immutable after estimation or parsing.
#[derive(Debug, Clone)]
pub struct NGramModel {
    pub(crate) order: usize,
    pub(crate) vocab: Vocab,
    pub(crate) nodes: Vec<Node>,
}

impl NGramModel {
    pub(crate) fn empty(order: usize, vocab: Vocab) -> Self {
        Self {
            order,
            vocab,
            nodes: vec![Node::default()],
        }
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn vocab(&self) -> &Vocab {
        &self.vocab
    }

    pub(crate) fn find_node(&self, context: &[u32]) -> Option<NodeId> {
        let mut node = ROOT;
        for w in context.iter().rev() {
            node = *self.nodes[node].children.get(w)?;
        }
        Some(node)
    }

    pub(crate) fn ensure_node(&mut self, context: &[u32]) -> NodeId {
        let mut node = ROOT;
        for &w in context.iter().rev() {
            node = match self.nodes[node].children.get(&w) {
                Some(&n) => n,
                None => {
                    let id = self.nodes.len();
                    self.nodes.push(Node::default());
                    self.nodes[node].children.insert(w, id);
                    id
                }
            };
        }
        node
    }

    pub(crate) fn set_prob(&mut self, context: &[u32], word: u32, logprob: f64) {
        let n = self.ensure_node(context);
        self.nodes[n].probs.insert(word, logprob);
    }

    pub(crate) fn set_backoff(&mut self, ngram: &[u32], backoff: f64) {
        let n = self.ensure_node(ngram);
        self.nodes[n].backoff = backoff;
    }

    /// Stored log10 probability of an n-gram, without backoff.
    pub fn stored_logprob(&self, ngram: &[u32]) -> Option<f64> {
        let (&w, ctx) = ngram.split_last()?;
        let n = self.find_node(ctx)?;
        self.nodes[n].probs.get(&w).copied()
    }

    /// Stored log10 backoff weight of a history; 0 when none is stored.
    pub fn backoff(&self, context: &[u32]) -> f64 {
        self.find_node(context).map_or(0.0, |n| self.nodes[n].backoff)
    }

    /// log10 P(token | context) by the backoff recursion. Only the last
    /// `order - 1` context words are used; unknown ids score as unk.
    pub fn logprob(&self, context: &[u32], token: u32) -> f64 {
        let token = if (token as usize) < self.vocab.len() {
            token
        } else {
            self.vocab.unk()
        };
        let keep = self.order - 1;
        let context = &context[context.len().saturating_sub(keep)..];

        let mut path = [ROOT; super::MAX_ORDER];
        let mut depth = 0;
        let mut node = ROOT;
        for w in context.iter().rev() {
            match self.nodes[node].children.get(w) {
                Some(&child) => {
                    node = child;
                    depth += 1;
                    path[depth] = child;
                }
                None => break,
            }
        }
        let mut acc = 0.0;
        for &n in path[..=depth].iter().rev() {
            if let Some(p) = self.nodes[n].probs.get(&token) {
                return acc + p;
            }
            acc += self.nodes[n].backoff;
        }
        // token has no unigram entry
        let unk = self.vocab.unk();
        acc + self.nodes[ROOT].probs.get(&unk).copied().unwrap_or(super::BOS_LOGPROB)
    }

    /// log10 probability of a whole sentence: bos-initialized context,
    /// every token, then the eos term.
    pub fn sequence_logprob(&self, ids: &[u32]) -> f64 {
        let mut context = Vec::with_capacity(ids.len() + 1);
        context.push(self.vocab.bos());
        let mut total = 0.0;
        for &id in ids {
            total += self.logprob(&context, id);
            context.push(id);
        }
        total + self.logprob(&context, self.vocab.eos())
    }

    /// Per-token incremental scores, same contract as [`Self::sequence_logprob`].
    pub fn token_logprobs(&self, ids: &[u32]) -> Vec<f64> {
        let mut context = vec![self.vocab.bos()];
        let mut out = Vec::with_capacity(ids.len() + 1);
        for &id in ids {
            out.push(self.logprob(&context, id));
            context.push(id);
        }
        out.push(self.logprob(&context, self.vocab.eos()));
        out
    }

    /// Every history node with its forward-order context, depth first with
    /// children visited in id order. The root (empty history) comes first.
    pub fn contexts(&self) -> Vec<Vec<u32>> {
        self.walk().into_iter().map(|(ctx, _)| ctx).collect()
    }

    pub(crate) fn walk(&self) -> Vec<(Vec<u32>, NodeId)> {
        let mut out = Vec::with_capacity(self.nodes.len());
        let mut stack = vec![(Vec::new(), ROOT)];
        while let Some((rev_ctx, node)) = stack.pop() {
            let mut ctx: Vec<u32> = rev_ctx.clone();
            ctx.reverse();
            out.push((ctx, node));
            let mut kids: Vec<(&u32, &NodeId)> = self.nodes[node].children.iter().collect();
            kids.sort_unstable_by(|a, b| b.0.cmp(a.0));
            for (&w, &child) in kids {
                let mut next = rev_ctx.clone();
                next.push(w);
                stack.push((next, child));
            }
        }
        out
    }

    /// Stored n-grams of order `n` as (ngram, log10 prob, log10 backoff),
    /// sorted by id sequence.
    pub fn ngrams(&self, n: usize) -> Vec<(Vec<u32>, f64, f64)> {
        let mut out = Vec::new();
        for (ctx, node) in self.walk() {
            if ctx.len() + 1 != n {
                continue;
            }
            for (&w, &p) in &self.nodes[node].probs {
                let mut gram = ctx.clone();
                gram.push(w);
                let bo = self.find_node(&gram).map_or(0.0, |g| self.nodes[g].backoff);
                out.push((gram, p, bo));
            }
        }
        out.sort_unstable_by(|a, b| a.0.cmp(&b.0));
        out
    }

    /// Number of stored n-grams per order, index 0 = unigrams.
    pub fn ngram_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.order];
        for (ctx, node) in self.walk() {
            if ctx.len() < self.order {
                counts[ctx.len()] += self.nodes[node].probs.len();
            }
        }
        counts
    }
}
