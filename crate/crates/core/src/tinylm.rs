//! A tabular next-token model over a tiny vocabulary, a low-rank tilt head,
//! tempered-tilt decoding, and the forget/utility metric stack.

use std::collections::HashMap;
use std::path::Path;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::classifier::sigmoid;
use crate::error::{Error, Result};

pub const EOS: &str = "</s>";
pub const MAX_VOCAB: usize = 64;
/// Lower clamp on head outputs before taking logs.
pub const TILT_CLAMP: f64 = 1e-12;
/// Denominator guard of the normalized probability metric.
pub const PROB_EPS: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocab {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocab {
    /// Builds a vocabulary in first-appearance order; [`EOS`] is always id 0.
    pub fn new<'a>(tokens: impl IntoIterator<Item = &'a str>) -> Result<Self> {
        let mut v = Self { tokens: Vec::new(), index: HashMap::new() };
        v.insert(EOS);
        for t in tokens {
            v.insert(t);
        }
        if v.len() > MAX_VOCAB {
            return Err(Error::invalid(format!("vocabulary has {} tokens, at most {MAX_VOCAB} allowed", v.len())));
        }
        Ok(v)
    }

    fn insert(&mut self, t: &str) {
        if !self.index.contains_key(t) {
            self.index.insert(t.to_string(), self.tokens.len());
            self.tokens.push(t.to_string());
        }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn eos(&self) -> usize {
        0
    }

    pub fn id(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: usize) -> &str {
        &self.tokens[id]
    }

    pub fn encode(&self, text: &str) -> Result<Vec<usize>> {
        text.split_whitespace()
            .map(|t| self.id(t).ok_or_else(|| Error::invalid(format!("unknown token {t:?}"))))
            .collect()
    }

    pub fn decode(&self, ids: &[usize]) -> String {
        ids.iter().map(|&i| self.token(i)).collect::<Vec<_>>().join(" ")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Split {
    Retain,
    Forget,
    /// Questions about real authors; utility only.
    RealAuthors,
    /// World-fact questions; utility only.
    WorldFacts,
}

impl Split {
    fn parse(s: &str) -> Option<Self> {
        match s {
            "retain" => Some(Split::Retain),
            "forget" => Some(Split::Forget),
            "ra" => Some(Split::RealAuthors),
            "wf" => Some(Split::WorldFacts),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Split::Retain => "retain",
            Split::Forget => "forget",
            Split::RealAuthors => "ra",
            Split::WorldFacts => "wf",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QaPair {
    pub split: Split,
    pub question: Vec<usize>,
    pub answer: Vec<usize>,
    pub paraphrase: Vec<usize>,
    pub perturbed: Vec<Vec<usize>>,
}

impl QaPair {
    /// The training document: question, answer, end of sequence.
    pub fn document(&self, eos: usize) -> Vec<usize> {
        let mut d = self.question.clone();
        d.extend_from_slice(&self.answer);
        d.push(eos);
        d
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TinyCorpus {
    pub vocab: Vocab,
    pub pairs: Vec<QaPair>,
}

impl TinyCorpus {
    /// Parses `split<TAB>question<TAB>answer<TAB>paraphrase<TAB>pert1|pert2|...`
    /// lines. Blank lines and lines starting with `#` are skipped.
    pub fn parse(text: &str) -> Result<Self> {
        let mut rows = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line_no = i + 1;
            let trimmed = line.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 5 {
                return Err(Error::Corpus {
                    line: line_no,
                    msg: format!("expected 5 tab-separated fields, got {}", fields.len()),
                });
            }
            let split = Split::parse(fields[0].trim())
                .ok_or_else(|| Error::Corpus { line: line_no, msg: format!("unknown split {:?}", fields[0]) })?;
            let perturbed: Vec<&str> = fields[4].split('|').map(str::trim).filter(|s| !s.is_empty()).collect();
            if perturbed.is_empty() {
                return Err(Error::Corpus { line: line_no, msg: "at least one perturbed answer is required".into() });
            }
            for (name, f) in [("question", fields[1]), ("answer", fields[2]), ("paraphrase", fields[3])] {
                if f.split_whitespace().next().is_none() {
                    return Err(Error::Corpus { line: line_no, msg: format!("empty {name}") });
                }
            }
            if fields[1..].iter().any(|f| f.split_whitespace().any(|t| t == EOS)) {
                return Err(Error::Corpus { line: line_no, msg: format!("{EOS} is reserved") });
            }
            rows.push((line_no, split, fields[1], fields[2], fields[3], perturbed));
        }
        if rows.is_empty() {
            return Err(Error::Corpus { line: 0, msg: "corpus has no documents".into() });
        }
        let all_tokens = rows.iter().flat_map(|(_, _, q, a, p, pert)| {
            q.split_whitespace()
                .chain(a.split_whitespace())
                .chain(p.split_whitespace())
                .chain(pert.iter().flat_map(|s| s.split_whitespace()))
        });
        let vocab = Vocab::new(all_tokens)?;
        let pairs = rows
            .iter()
            .map(|(_, split, q, a, p, pert)| {
                Ok(QaPair {
                    split: *split,
                    question: vocab.encode(q)?,
                    answer: vocab.encode(a)?,
                    paraphrase: vocab.encode(p)?,
                    perturbed: pert.iter().map(|s| vocab.encode(s)).collect::<Result<_>>()?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { vocab, pairs })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    /// The bundled eight-author demo corpus.
    pub fn demo() -> Self {
        Self::parse(include_str!("../data/demo_corpus.tsv")).expect("bundled corpus parses")
    }

    pub fn split(&self, split: Split) -> impl Iterator<Item = &QaPair> {
        self.pairs.iter().filter(move |p| p.split == split)
    }

    pub fn documents(&self, split: Split) -> Vec<Vec<usize>> {
        self.split(split).map(|p| p.document(self.vocab.eos())).collect()
    }

    pub fn retain_docs(&self) -> Vec<Vec<usize>> {
        self.documents(Split::Retain)
    }

    pub fn forget_docs(&self) -> Vec<Vec<usize>> {
        self.documents(Split::Forget)
    }

    /// Every document except the forget split.
    pub fn non_forget_docs(&self) -> Vec<Vec<usize>> {
        self.pairs.iter().filter(|p| p.split != Split::Forget).map(|p| p.document(self.vocab.eos())).collect()
    }

    pub fn all_docs(&self) -> Vec<Vec<usize>> {
        self.pairs.iter().map(|p| p.document(self.vocab.eos())).collect()
    }
}

/// Anything that produces a next-token distribution from a context.
pub trait NextToken {
    fn vocab_size(&self) -> usize;
    fn next_probs(&self, context: &[usize]) -> Vec<f64>;
}

/// Order-`m` count model with additive smoothing.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularLm {
    order: usize,
    vocab_size: usize,
    probs: Vec<f64>,
    ln_probs: Vec<f64>,
}

/// Fits an order-`order` model; only positions with a full `order`-token
/// history are counted. Contexts never seen (with `alpha = 0`) get uniform
/// rows.
pub fn fit_lm(vocab_size: usize, docs: &[Vec<usize>], order: usize, alpha: f64) -> Result<TabularLm> {
    if !(1..=2).contains(&order) {
        return Err(Error::invalid(format!("order must be 1 or 2, got {order}")));
    }
    if docs.is_empty() {
        return Err(Error::invalid("cannot fit a model to no documents"));
    }
    if !(alpha >= 0.0) || !alpha.is_finite() {
        return Err(Error::invalid(format!("smoothing must be finite and >= 0, got {alpha}")));
    }
    let v = vocab_size;
    let rows = v.pow(order as u32);
    let mut counts = vec![0.0f64; rows * v];
    for doc in docs {
        if let Some(&bad) = doc.iter().find(|&&t| t >= v) {
            return Err(Error::invalid(format!("token id {bad} outside vocabulary of {v}")));
        }
        for t in order..doc.len() {
            counts[context_row(&doc[t - order..t], v) * v + doc[t]] += 1.0;
        }
    }
    let mut probs = vec![0.0; rows * v];
    for r in 0..rows {
        let row = &counts[r * v..(r + 1) * v];
        let total: f64 = row.iter().sum::<f64>() + alpha * v as f64;
        for y in 0..v {
            probs[r * v + y] = if total > 0.0 { (row[y] + alpha) / total } else { 1.0 / v as f64 };
        }
    }
    let ln_probs = probs.iter().map(|p| p.ln()).collect();
    Ok(TabularLm { order, vocab_size: v, probs, ln_probs })
}

fn context_row(ctx: &[usize], v: usize) -> usize {
    ctx.iter().fold(0, |acc, &t| acc * v + t)
}

impl TabularLm {
    pub fn order(&self) -> usize {
        self.order
    }

    fn row(&self, context: &[usize]) -> usize {
        assert!(context.len() >= self.order, "context shorter than model order");
        context_row(&context[context.len() - self.order..], self.vocab_size)
    }

    pub fn probs(&self, context: &[usize]) -> &[f64] {
        let r = self.row(context);
        &self.probs[r * self.vocab_size..(r + 1) * self.vocab_size]
    }

    pub fn ln_probs(&self, context: &[usize]) -> &[f64] {
        let r = self.row(context);
        &self.ln_probs[r * self.vocab_size..(r + 1) * self.vocab_size]
    }
}

impl NextToken for TabularLm {
    fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    fn next_probs(&self, context: &[usize]) -> Vec<f64> {
        self.probs(context).to_vec()
    }
}

/// A per-token tilt `g(x) ∈ (0,1]^{|V|}` of the next-token distribution.
pub trait TokenTilt {
    fn tilt(&self, context: &[usize]) -> Vec<f64>;
}

/// Tilts every token by the same factor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstantTilt {
    pub value: f64,
    pub vocab_size: usize,
}

impl TokenTilt for ConstantTilt {
    fn tilt(&self, _context: &[usize]) -> Vec<f64> {
        vec![self.value; self.vocab_size]
    }
}

/// `g(x) = σ(B·A·pool(x))` over the pooled one-hot encoding of the last
/// `order` context tokens.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadClassifier {
    order: usize,
    vocab_size: usize,
    rank: usize,
    /// `rank × (vocab_size·order)`, row-major.
    pub a: Vec<f64>,
    /// `vocab_size × rank`, row-major.
    pub b: Vec<f64>,
}

impl HeadClassifier {
    pub fn zeros(vocab_size: usize, order: usize, rank: usize) -> Self {
        Self { order, vocab_size, rank, a: vec![0.0; rank * vocab_size * order], b: vec![0.0; vocab_size * rank] }
    }

    pub fn random<R: Rng + ?Sized>(vocab_size: usize, order: usize, rank: usize, scale: f64, rng: &mut R) -> Self {
        let mut h = Self::zeros(vocab_size, order, rank);
        for w in h.a.iter_mut().chain(h.b.iter_mut()) {
            *w = scale * rng.sample::<f64, _>(StandardNormal);
        }
        h
    }

    pub fn feature_dim(&self) -> usize {
        self.vocab_size * self.order
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    /// Indices of the nonzero pooled features; each carries weight `1/order`.
    fn active(&self, context: &[usize]) -> Vec<usize> {
        let m = self.order;
        let tail = &context[context.len() - m..];
        tail.iter().enumerate().map(|(slot, &t)| slot * self.vocab_size + t).collect()
    }

    /// The dense pooled feature vector.
    pub fn pool(&self, context: &[usize]) -> Vec<f64> {
        let mut x = vec![0.0; self.feature_dim()];
        for j in self.active(context) {
            x[j] += 1.0 / self.order as f64;
        }
        x
    }

    fn hidden(&self, active: &[usize]) -> Vec<f64> {
        let d = self.feature_dim();
        let w = 1.0 / self.order as f64;
        (0..self.rank).map(|r| active.iter().map(|&j| self.a[r * d + j] * w).sum()).collect()
    }

    fn logit(&self, hidden: &[f64], y: usize) -> f64 {
        let row = &self.b[y * self.rank..(y + 1) * self.rank];
        row.iter().zip(hidden).map(|(b, h)| b * h).sum()
    }

    pub fn predict(&self, context: &[usize], y: usize) -> f64 {
        let h = self.hidden(&self.active(context));
        sigmoid(self.logit(&h, y))
    }

    pub fn frobenius_norms(&self) -> (f64, f64) {
        let n = |w: &[f64]| w.iter().map(|x| x * x).sum::<f64>().sqrt();
        (n(&self.a), n(&self.b))
    }
}

impl TokenTilt for HeadClassifier {
    fn tilt(&self, context: &[usize]) -> Vec<f64> {
        let h = self.hidden(&self.active(context));
        (0..self.vocab_size).map(|y| sigmoid(self.logit(&h, y))).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeadConfig {
    pub rank: usize,
    pub lambda: f64,
    pub epochs: usize,
    pub learning_rate: f64,
    pub init_scale: f64,
}

impl Default for HeadConfig {
    fn default() -> Self {
        Self { rank: 8, lambda: 1e-4, epochs: 300, learning_rate: 0.05, init_scale: 0.1 }
    }
}

/// One labeled `(context, next token, s)` pair.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenExample {
    pub context: Vec<usize>,
    pub token: usize,
    pub retain: bool,
}

/// Every position with a full `order`-token history, labeled by document.
pub fn token_examples(retain_docs: &[Vec<usize>], forget_docs: &[Vec<usize>], order: usize) -> Vec<TokenExample> {
    let mut out = Vec::new();
    for (docs, retain) in [(retain_docs, true), (forget_docs, false)] {
        for doc in docs {
            for t in order..doc.len() {
                out.push(TokenExample { context: doc[t - order..t].to_vec(), token: doc[t], retain });
            }
        }
    }
    out
}

/// Full-batch Adam on the mean token cross-entropy plus
/// `λ(‖A‖²_F + ‖B‖²_F)`. Returns the head and the per-epoch objective.
pub fn train_head<R: Rng + ?Sized>(
    vocab_size: usize,
    order: usize,
    examples: &[TokenExample],
    cfg: &HeadConfig,
    rng: &mut R,
) -> Result<(HeadClassifier, Vec<f64>)> {
    if examples.is_empty() {
        return Err(Error::invalid("head training needs at least one example"));
    }
    if cfg.rank == 0 || !(cfg.lambda >= 0.0) || !(cfg.learning_rate > 0.0) {
        return Err(Error::invalid("head config needs rank >= 1, lambda >= 0 and a positive learning rate"));
    }
    let mut head = HeadClassifier::random(vocab_size, order, cfg.rank, cfg.init_scale, rng);
    let cached: Vec<(Vec<usize>, usize, f64)> =
        examples.iter().map(|e| (head.active(&e.context), e.token, if e.retain { 1.0 } else { 0.0 })).collect();
    let n = cached.len() as f64;
    let d = head.feature_dim();
    let w = 1.0 / order as f64;
    let (beta1, beta2, eps): (f64, f64, f64) = (0.9, 0.999, 1e-8);
    let n_params = head.a.len() + head.b.len();
    let (mut m1, mut m2) = (vec![0.0; n_params], vec![0.0; n_params]);
    let mut trace = Vec::with_capacity(cfg.epochs);

    for epoch in 1..=cfg.epochs {
        let mut ga: Vec<f64> = head.a.iter().map(|x| 2.0 * cfg.lambda * x).collect();
        let mut gb: Vec<f64> = head.b.iter().map(|x| 2.0 * cfg.lambda * x).collect();
        let mut loss = 0.0;
        for (active, y, s) in &cached {
            let h = head.hidden(active);
            let z = head.logit(&h, *y);
            loss += crate::classifier::softplus(z) - s * z;
            let dz = (sigmoid(z) - s) / n;
            let brow = *y * cfg.rank;
            for r in 0..cfg.rank {
                gb[brow + r] += dz * h[r];
                let dh = dz * head.b[brow + r];
                for &j in active {
                    ga[r * d + j] += dh * w;
                }
            }
        }
        let reg = cfg.lambda * (head.a.iter().chain(&head.b).map(|x| x * x).sum::<f64>());
        trace.push(loss / n + reg);

        let bc1 = 1.0 - beta1.powi(epoch as i32);
        let bc2 = 1.0 - beta2.powi(epoch as i32);
        for (i, (p, g)) in head.a.iter_mut().chain(head.b.iter_mut()).zip(ga.iter().chain(&gb)).enumerate() {
            m1[i] = beta1 * m1[i] + (1.0 - beta1) * g;
            m2[i] = beta2 * m2[i] + (1.0 - beta2) * g * g;
            *p -= cfg.learning_rate * (m1[i] / bc1) / ((m2[i] / bc2).sqrt() + eps);
        }
    }
    Ok((head, trace))
}

/// `softmax(ln p/T + ln g)`, with both parts shifted to a zero maximum
/// first so that a constant tilt cancels exactly.
pub fn tilted_softmax(ln_p: &[f64], g: &[f64], temperature: f64) -> Vec<f64> {
    let a: Vec<f64> = ln_p.iter().map(|l| l / temperature).collect();
    let a_max = a.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lg: Vec<f64> = g.iter().map(|x| x.clamp(TILT_CLAMP, 1.0).ln()).collect();
    let g_max = lg.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let s: Vec<f64> = a.iter().zip(&lg).map(|(x, y)| (x - a_max) + (y - g_max)).collect();
    let s_max = s.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = s.iter().map(|x| (x - s_max).exp()).collect();
    let z: f64 = e.iter().sum();
    e.into_iter().map(|x| x / z).collect()
}

/// The tempered, tilted next-token distribution.
pub fn tilted_next_token<H: TokenTilt + ?Sized>(
    lm: &TabularLm,
    head: &H,
    context: &[usize],
    temperature: f64,
) -> Vec<f64> {
    tilted_softmax(lm.ln_probs(context), &head.tilt(context), temperature)
}

/// The tempered base distribution, through the same softmax as the tilted one.
pub fn tempered_next_token(lm: &TabularLm, context: &[usize], temperature: f64) -> Vec<f64> {
    tilted_softmax(lm.ln_probs(context), &vec![1.0; lm.vocab_size], temperature)
}

/// A base model decoded through `softmax(ln p/T + ln g)`.
pub struct TiltedLm<'a, H: ?Sized> {
    pub lm: &'a TabularLm,
    pub head: &'a H,
    pub temperature: f64,
}

impl<H: TokenTilt + ?Sized> NextToken for TiltedLm<'_, H> {
    fn vocab_size(&self) -> usize {
        self.lm.vocab_size
    }

    fn next_probs(&self, context: &[usize]) -> Vec<f64> {
        tilted_next_token(self.lm, self.head, context, self.temperature)
    }
}

/// `p(answer | question)` as a product of next-token probabilities.
pub fn sequence_prob<M: NextToken + ?Sized>(model: &M, question: &[usize], answer: &[usize]) -> f64 {
    let mut ctx = question.to_vec();
    let mut ln = 0.0;
    for &y in answer {
        ln += model.next_probs(&ctx)[y].ln();
        ctx.push(y);
    }
    ln.exp()
}

/// `p(answer | question)^{1/|answer|}`.
pub fn normalized_prob<M: NextToken + ?Sized>(model: &M, question: &[usize], answer: &[usize]) -> f64 {
    sequence_prob(model, question, answer).powf(1.0 / answer.len() as f64)
}

/// Greedy decoding until end of sequence (excluded) or `max_len` tokens.
pub fn greedy_decode<M: NextToken + ?Sized>(model: &M, prompt: &[usize], eos: usize, max_len: usize) -> Vec<usize> {
    let mut ctx = prompt.to_vec();
    let mut out = Vec::new();
    for _ in 0..max_len {
        let p = model.next_probs(&ctx);
        let mut best = 0;
        for (i, &x) in p.iter().enumerate() {
            if x > p[best] {
                best = i;
            }
        }
        if best == eos {
            break;
        }
        out.push(best);
        ctx.push(best);
    }
    out
}

/// Mean normalized probability of the perturbed answers over that of the
/// paraphrased answer.
pub fn truth_ratio<M: NextToken + ?Sized>(
    model: &M,
    question: &[usize],
    paraphrase: &[usize],
    perturbed: &[Vec<usize>],
) -> f64 {
    let pert = perturbed.iter().map(|a| normalized_prob(model, question, a)).sum::<f64>() / perturbed.len() as f64;
    pert / normalized_prob(model, question, paraphrase)
}

pub fn tr_plus(r_truth: f64) -> f64 {
    (1.0 - r_truth).clamp(0.0, 1.0)
}

pub fn lcs_len<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y { prev[j] + 1 } else { cur[j].max(prev[j + 1]) };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// `|LCS(generated, reference)| / |reference|`.
pub fn rouge_l_recall<T: PartialEq>(generated: &[T], reference: &[T]) -> f64 {
    if reference.is_empty() {
        return 0.0;
    }
    lcs_len(generated, reference) as f64 / reference.len() as f64
}

/// Two-sample Kolmogorov–Smirnov statistic: the largest gap between the
/// empirical CDFs over the pooled sample points.
pub fn ks_statistic(a: &[f64], b: &[f64]) -> f64 {
    let mut xs: Vec<f64> = a.to_vec();
    let mut ys: Vec<f64> = b.to_vec();
    xs.sort_by(f64::total_cmp);
    ys.sort_by(f64::total_cmp);
    let (n, m) = (xs.len() as f64, ys.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d = 0.0f64;
    while i < xs.len() || j < ys.len() {
        let t = match (xs.get(i), ys.get(j)) {
            (Some(&x), Some(&y)) => x.min(y),
            (Some(&x), None) => x,
            (None, Some(&y)) => y,
            (None, None) => unreachable!(),
        };
        while i < xs.len() && xs[i] <= t {
            i += 1;
        }
        while j < ys.len() && ys[j] <= t {
            j += 1;
        }
        d = d.max((i as f64 / n - j as f64 / m).abs());
    }
    d
}

/// `(D_KS, p)` with `p = min(1, 2·exp(−n_f·D²))`, `n_f` the size of the
/// unlearned sample.
pub fn forget_quality(unlearned: &[f64], reference: &[f64]) -> Result<(f64, f64)> {
    if unlearned.is_empty() || reference.is_empty() {
        return Err(Error::invalid("forget quality needs two nonempty samples"));
    }
    let d = ks_statistic(unlearned, reference);
    let p = (2.0 * (-(unlearned.len() as f64) * d * d).exp()).min(1.0);
    Ok((d, p))
}

/// Harmonic mean; zero if any input is zero.
pub fn harmonic_mean(xs: &[f64]) -> f64 {
    if xs.is_empty() || xs.iter().any(|&x| x <= 0.0) {
        return 0.0;
    }
    xs.len() as f64 / xs.iter().map(|x| 1.0 / x).sum::<f64>()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UtilityTriple {
    pub probability: f64,
    pub rouge: f64,
    pub tr_plus: f64,
}

/// `(MU, MU-ROUGE)`: the harmonic mean of every value, and of the ROUGE values.
pub fn model_utility(triples: &[UtilityTriple]) -> (f64, f64) {
    let all: Vec<f64> = triples.iter().flat_map(|t| [t.probability, t.rouge, t.tr_plus]).collect();
    let rouge: Vec<f64> = triples.iter().map(|t| t.rouge).collect();
    (harmonic_mean(&all), harmonic_mean(&rouge))
}

/// `p^{1/|a|} / (p^{1/|a|} + Σ p̃^{1/|ã|} + ε)`.
pub fn normalized_choice_prob<M: NextToken + ?Sized>(model: &M, pair: &QaPair) -> f64 {
    let p = normalized_prob(model, &pair.question, &pair.answer);
    let rest: f64 = pair.perturbed.iter().map(|a| normalized_prob(model, &pair.question, a)).sum();
    p / (p + rest + PROB_EPS)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitMetrics {
    pub split: Split,
    pub probability: f64,
    pub rouge: f64,
    pub truth_ratios: Vec<f64>,
    pub tr_plus: f64,
}

impl SplitMetrics {
    pub fn utility(&self) -> UtilityTriple {
        UtilityTriple { probability: self.probability, rouge: self.rouge, tr_plus: self.tr_plus }
    }
}

/// Maximum number of tokens greedily decoded per answer.
pub const MAX_DECODE: usize = 16;

/// Probability (plain for retain and forget, normalized over the perturbed
/// answers for ra and wf), ROUGE-L recall of greedy decodes, and truth
/// ratios of one split.
pub fn evaluate_split<M: NextToken + ?Sized>(model: &M, corpus: &TinyCorpus, split: Split) -> Option<SplitMetrics> {
    let pairs: Vec<&QaPair> = corpus.split(split).collect();
    if pairs.is_empty() {
        return None;
    }
    let k = pairs.len() as f64;
    let eos = corpus.vocab.eos();
    let normalized = matches!(split, Split::RealAuthors | Split::WorldFacts);
    let probability =
        pairs
            .iter()
            .map(|p| {
                if normalized {
                    normalized_choice_prob(model, p)
                } else {
                    normalized_prob(model, &p.question, &p.answer)
                }
            })
            .sum::<f64>()
            / k;
    let rouge = pairs
        .iter()
        .map(|p| rouge_l_recall(&greedy_decode(model, &p.question, eos, MAX_DECODE), &p.answer))
        .sum::<f64>()
        / k;
    let truth_ratios: Vec<f64> =
        pairs.iter().map(|p| truth_ratio(model, &p.question, &p.paraphrase, &p.perturbed)).collect();
    let tr_plus = truth_ratios.iter().map(|&r| tr_plus(r)).sum::<f64>() / k;
    Some(SplitMetrics { split, probability, rouge, truth_ratios, tr_plus })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UnlearnConfig {
    pub order: usize,
    pub alpha: f64,
    pub temperature: f64,
    pub head: HeadConfig,
    pub seed: u64,
}

impl Default for UnlearnConfig {
    fn default() -> Self {
        Self { order: 2, alpha: 1e-3, temperature: 2.0, head: HeadConfig::default(), seed: 0 }
    }
}

#[derive(Debug, Clone)]
pub struct UnlearnReport {
    pub temperature: f64,
    pub splits: Vec<SplitMetrics>,
    pub forget_quality: (f64, f64),
    pub model_utility: f64,
    pub mu_rouge: f64,
    /// Per forget answer: base over unlearned normalized probability.
    pub forget_prob_reductions: Vec<f64>,
    /// Fraction of retain questions whose greedy decode is unchanged.
    pub retain_decodes_unchanged: f64,
}

pub struct UnlearnModels {
    pub base: TabularLm,
    pub reference: TabularLm,
    pub head: HeadClassifier,
}

/// Fits the base model on every document, the reference model on every
/// non-forget document, and the head on retain versus forget documents.
pub fn fit_models(corpus: &TinyCorpus, cfg: &UnlearnConfig) -> Result<UnlearnModels> {
    use rand::SeedableRng;
    let v = corpus.vocab.len();
    let base = fit_lm(v, &corpus.all_docs(), cfg.order, cfg.alpha)?;
    let reference = fit_lm(v, &corpus.non_forget_docs(), cfg.order, cfg.alpha)?;
    let examples = token_examples(&corpus.retain_docs(), &corpus.forget_docs(), cfg.order);
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(cfg.seed);
    let (head, _) = train_head(v, cfg.order, &examples, &cfg.head, &mut rng)?;
    Ok(UnlearnModels { base, reference, head })
}

pub fn run_unlearning(corpus: &TinyCorpus, cfg: &UnlearnConfig) -> Result<UnlearnReport> {
    if !(cfg.temperature >= 1.0) {
        return Err(Error::invalid(format!("temperature must be >= 1, got {}", cfg.temperature)));
    }
    let models = fit_models(corpus, cfg)?;
    let tilted = TiltedLm { lm: &models.base, head: &models.head, temperature: cfg.temperature };
    let eos = corpus.vocab.eos();

    let splits: Vec<SplitMetrics> = [Split::Retain, Split::Forget, Split::RealAuthors, Split::WorldFacts]
        .into_iter()
        .filter_map(|s| evaluate_split(&tilted, corpus, s))
        .collect();
    let forget = splits
        .iter()
        .find(|m| m.split == Split::Forget)
        .ok_or_else(|| Error::invalid("corpus has no forget documents"))?;
    let reference = evaluate_split(&models.reference, corpus, Split::Forget).expect("forget split is nonempty");
    let forget_quality = forget_quality(&forget.truth_ratios, &reference.truth_ratios)?;
    let utility: Vec<UtilityTriple> = splits.iter().filter(|m| m.split != Split::Forget).map(|m| m.utility()).collect();
    let (model_utility, mu_rouge) = model_utility(&utility);

    let forget_prob_reductions = corpus
        .split(Split::Forget)
        .map(|p| {
            normalized_prob(&models.base, &p.question, &p.answer) / normalized_prob(&tilted, &p.question, &p.answer)
        })
        .collect();
    let retain: Vec<&QaPair> = corpus.split(Split::Retain).collect();
    let unchanged = retain
        .iter()
        .filter(|p| {
            greedy_decode(&models.base, &p.question, eos, MAX_DECODE)
                == greedy_decode(&tilted, &p.question, eos, MAX_DECODE)
        })
        .count();
    let retain_decodes_unchanged = if retain.is_empty() { 1.0 } else { unchanged as f64 / retain.len() as f64 };

    Ok(UnlearnReport {
        temperature: cfg.temperature,
        splits,
        forget_quality,
        model_utility,
        mu_rouge,
        forget_prob_reductions,
        retain_decodes_unchanged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn toy_lm() -> TabularLm {
        fit_lm(3, &[vec![0, 1, 2, 1, 0], vec![1, 2, 2, 0]], 1, 0.1).unwrap()
    }

    #[test]
    fn count_arithmetic_order_one() {
        // "a b a b" over {a, b}
        let alpha = 0.5;
        let lm = fit_lm(2, &[vec![0, 1, 0, 1]], 1, alpha).unwrap();
        let p = lm.probs(&[0])[1];
        assert!((p - (2.0 + alpha) / (2.0 + 2.0 * alpha)).abs() < 1e-15);
    }

    #[test]
    fn rows_normalize_and_smoothing_flattens() {
        for order in [1, 2] {
            let lm = fit_lm(4, &[vec![0, 1, 2, 3, 1, 2], vec![3, 3, 1]], order, 1e-3).unwrap();
            for r in 0..4usize.pow(order as u32) {
                let row = &lm.probs[r * 4..(r + 1) * 4];
                assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
                assert!(row.iter().all(|&p| p > 0.0));
            }
        }
        let flat = fit_lm(4, &[vec![0, 1, 2, 3]], 1, 1e12).unwrap();
        for &p in flat.probs(&[0]) {
            assert!((p - 0.25).abs() < 1e-9);
        }
        let unsmoothed = fit_lm(4, &[vec![0, 1]], 1, 0.0).unwrap();
        assert_eq!(unsmoothed.probs(&[3]), &[0.25; 4]);
    }

    #[test]
    fn hand_computed_tilt() {
        let p = [0.7f64, 0.2, 0.1];
        let lp: Vec<f64> = p.iter().map(|x| x.ln()).collect();
        let out = tilted_softmax(&lp, &[0.01, 0.9, 0.9], 1.0);
        let raw = [0.007, 0.18, 0.09];
        let z: f64 = raw.iter().sum();
        for i in 0..3 {
            assert!((out[i] - raw[i] / z).abs() < 1e-12);
        }
        assert!((out[0] - 0.02527).abs() < 1e-5 && (out[1] - 0.64982).abs() < 1e-5 && (out[2] - 0.32491).abs() < 1e-5);
    }

    #[test]
    fn constant_tilt_is_exact_identity() {
        let lm = toy_lm();
        for ctx in 0..3 {
            let c = ConstantTilt { value: 0.37, vocab_size: 3 };
            let tilted = tilted_next_token(&lm, &c, &[ctx], 1.0);
            assert_eq!(tilted, tempered_next_token(&lm, &[ctx], 1.0));
            for (a, b) in tilted.iter().zip(lm.probs(&[ctx])) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn high_temperature_flattens() {
        let lm = toy_lm();
        let c = ConstantTilt { value: 1.0, vocab_size: 3 };
        for p in tilted_next_token(&lm, &c, &[1], 1e9) {
            assert!((p - 1.0 / 3.0).abs() < 1e-8);
        }
    }

    #[test]
    fn zero_head_predicts_half() {
        let h = HeadClassifier::zeros(5, 2, 3);
        assert!(h.tilt(&[1, 4]).iter().all(|&g| g == 0.5));
    }

    #[test]
    fn pooled_features_are_slot_one_hots() {
        let h = HeadClassifier::zeros(4, 2, 2);
        let x = h.pool(&[9, 3, 1]);
        let mut expect = vec![0.0; 8];
        expect[3] = 0.5;
        expect[4 + 1] = 0.5;
        assert_eq!(x, expect);
    }

    #[test]
    fn head_gradient_matches_finite_differences() {
        let docs_r = vec![vec![0, 1, 2, 0], vec![1, 1, 2, 0]];
        let docs_f = vec![vec![0, 3, 3, 0]];
        let ex = token_examples(&docs_r, &docs_f, 2);
        let cfg = HeadConfig { rank: 2, lambda: 0.01, epochs: 1, learning_rate: 1e-3, init_scale: 0.5 };
        // One Adam step from a fixed start moves each parameter against the
        // sign of its gradient by about the learning rate.
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let start = HeadClassifier::random(4, 2, 2, 0.5, &mut ChaCha8Rng::seed_from_u64(3));
        let (after, _) = train_head(4, 2, &ex, &cfg, &mut rng).unwrap();
        let objective = |h: &HeadClassifier| {
            let mut l = 0.0;
            for e in &ex {
                let g = h.predict(&e.context, e.token);
                l += if e.retain { -g.ln() } else { -(1.0 - g).ln() };
            }
            l / ex.len() as f64 + cfg.lambda * h.a.iter().chain(&h.b).map(|x| x * x).sum::<f64>()
        };
        let step = 1e-6;
        for i in 0..start.a.len() {
            let mut hp = start.clone();
            hp.a[i] += step;
            let mut hm = start.clone();
            hm.a[i] -= step;
            let g = (objective(&hp) - objective(&hm)) / (2.0 * step);
            if g.abs() > 1e-6 {
                let moved = after.a[i] - start.a[i];
                assert!(moved * g < 0.0, "param {i}: gradient {g}, step {moved}");
            }
        }
    }

    #[test]
    fn strong_regularization_shrinks_head() {
        let c = TinyCorpus::demo();
        let ex = token_examples(&c.retain_docs(), &c.forget_docs(), 2);
        let cfg = HeadConfig { lambda: 1e6, epochs: 300, ..HeadConfig::default() };
        let (h, _) = train_head(c.vocab.len(), 2, &ex, &cfg, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let (na, nb) = h.frobenius_norms();
        assert!(na <= 1e-2 && nb <= 1e-2, "{na} {nb}");
    }

    #[test]
    fn truth_ratio_and_tr_plus() {
        assert_eq!(tr_plus(1.0), 0.0);
        assert_eq!(tr_plus(0.5), 0.5);
        assert_eq!(tr_plus(3.0), 0.0);
        // Order-0 style model: fixed next-token distribution.
        struct Fixed(Vec<f64>);
        impl NextToken for Fixed {
            fn vocab_size(&self) -> usize {
                self.0.len()
            }
            fn next_probs(&self, _: &[usize]) -> Vec<f64> {
                self.0.clone()
            }
        }
        let m = Fixed(vec![0.5, 0.2, 0.4]);
        let r = truth_ratio(&m, &[], &[0], &[vec![1], vec![2, 2]]);
        assert!((r - 0.6).abs() < 1e-12, "{r}");
        assert!((truth_ratio(&m, &[], &[2], &[vec![2, 2, 2]]) - 1.0).abs() < 1e-12);
        // Repeating a constant-probability answer keeps its normalized probability.
        let one = normalized_prob(&m, &[], &[1]);
        let five = normalized_prob(&m, &[], &[1, 1, 1, 1, 1]);
        assert!((one - five).abs() < 1e-12);
    }

    #[test]
    fn rouge_values() {
        assert_eq!(rouge_l_recall(&[1, 2, 3], &[1, 2, 3]), 1.0);
        assert!((rouge_l_recall(&["cat"], &["the", "cat", "sat"]) - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(rouge_l_recall::<u8>(&[], &[1, 2]), 0.0);
        assert_eq!(lcs_len(&[1, 3, 4, 1, 2], &[3, 1, 2, 4]), 3);
    }

    #[test]
    fn ks_values() {
        let (d, p) = forget_quality(&[0.3, 0.1, 0.2], &[0.1, 0.2, 0.3]).unwrap();
        assert_eq!((d, p), (0.0, 1.0));
        let (d, p) = forget_quality(&[0.0; 3], &[1.0; 3]).unwrap();
        assert_eq!(d, 1.0);
        assert!((p - 2.0 * (-3.0f64).exp()).abs() < 1e-15);
        assert!((p - 0.0996).abs() < 1e-4);
        assert!(forget_quality(&[], &[1.0]).is_err());
    }

    #[test]
    fn harmonic_means() {
        assert_eq!(harmonic_mean(&[1.0; 9]), 1.0);
        assert_eq!(harmonic_mean(&[1.0, 0.0, 1.0]), 0.0);
        assert!((harmonic_mean(&[0.5, 1.0, 1.0]) - 0.75).abs() < 1e-15);
        let t = UtilityTriple { probability: 1.0, rouge: 1.0, tr_plus: 1.0 };
        assert_eq!(model_utility(&[t; 3]), (1.0, 1.0));
    }

    #[test]
    fn corpus_parse_errors() {
        assert!(matches!(TinyCorpus::parse("retain\ta\tb\tc"), Err(Error::Corpus { line: 1, .. })));
        assert!(matches!(TinyCorpus::parse("x\ta\tb\tc\td"), Err(Error::Corpus { .. })));
        assert!(matches!(TinyCorpus::parse("retain\ta\tb\tc\t "), Err(Error::Corpus { .. })));
        assert!(matches!(TinyCorpus::parse("# only a comment\n"), Err(Error::Corpus { .. })));
        let c = TinyCorpus::parse("retain\tq w\ta\ta\tb|c\n").unwrap();
        assert_eq!(c.vocab.len(), 6);
        assert_eq!(c.retain_docs(), vec![vec![1, 2, 3, 0]]);
    }

    #[test]
    fn demo_corpus_shape() {
        let c = TinyCorpus::demo();
        assert!(c.vocab.len() <= MAX_VOCAB);
        assert_eq!(c.split(Split::Retain).count(), 24);
        assert_eq!(c.split(Split::Forget).count(), 8);
        let retain_tokens: std::collections::HashSet<usize> =
            c.split(Split::Retain).flat_map(|p| p.answer.clone()).collect();
        for p in c.split(Split::Forget) {
            assert!(p.answer.iter().all(|t| !retain_tokens.contains(t)));
        }
        // The order-2 base model reproduces every training answer.
        let lm = fit_lm(c.vocab.len(), &c.all_docs(), 2, 1e-3).unwrap();
        for p in &c.pairs {
            assert_eq!(greedy_decode(&lm, &p.question, c.vocab.eos(), MAX_DECODE), p.answer);
        }
    }
}
