use std::collections::HashMap;

use super::{context_features, prefix_features, softmax_in_place, ToyModel};
use crate::seq::{TokenSeq, MARK_END};

/// Gradient rows keyed by feature id; each row spans the vocabulary.
pub type Grad = HashMap<u64, Vec<f64>>;

/// A formatted corrector context and the tokens to predict after
/// `[START]`, ending with `[END]`.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainingExample {
    pub context: TokenSeq,
    pub target: TokenSeq,
}

impl TrainingExample {
    /// Target is `output` followed by `[END]`.
    pub fn new(context: TokenSeq, output: &TokenSeq) -> Self {
        let mut target = output.clone();
        target.push(MARK_END);
        TrainingExample { context, target }
    }
}

/// Mean per-token cross-entropy of the target plus `l2/2 · ‖w‖²` over the
/// rows the example touches, and its exact gradient.
pub fn loss_and_grad(model: &ToyModel, example: &TrainingExample) -> (f64, Grad) {
    let params = &model.params;
    let v = model.vocab.len();
    let ctx = context_features(&example.context);
    let target: Vec<u32> = example
        .target
        .iter()
        .map(|t| model.vocab.index_or_unk(t))
        .collect();
    let toks = example.target.tokens();
    let n = target.len().max(1) as f64;

    let mut base = vec![0.0; v];
    params.accumulate(&ctx, &mut base);

    let mut grad: Grad = HashMap::new();
    let mut ctx_grad = vec![0.0; v];
    let mut loss = 0.0;
    let mut probs = vec![0.0; v];
    for (j, &y) in target.iter().enumerate() {
        let pre = prefix_features(&toks[..j]);
        probs.copy_from_slice(&base);
        params.accumulate(&pre, &mut probs);
        softmax_in_place(&mut probs);
        loss -= probs[y as usize].max(f64::MIN_POSITIVE).ln();
        probs[y as usize] -= 1.0;
        for (g, d) in ctx_grad.iter_mut().zip(&probs) {
            *g += d;
        }
        for f in pre {
            let row = grad.entry(f).or_insert_with(|| vec![0.0; v]);
            for (g, d) in row.iter_mut().zip(&probs) {
                *g += d;
            }
        }
    }
    for f in ctx {
        let row = grad.entry(f).or_insert_with(|| vec![0.0; v]);
        for (g, d) in row.iter_mut().zip(&ctx_grad) {
            *g += d;
        }
    }

    loss /= n;
    let mut penalty = 0.0;
    for (f, row) in grad.iter_mut() {
        let w = params.row(*f);
        for (t, g) in row.iter_mut().enumerate() {
            *g /= n;
            if let Some(w) = w {
                *g += params.l2 * w[t];
                penalty += w[t] * w[t];
            }
        }
    }
    (loss + 0.5 * params.l2 * penalty, grad)
}

/// One gradient step on the mean batch loss. Returns that loss (before the
/// step).
pub fn train_batch(model: &mut ToyModel, batch: &[TrainingExample], lr: f64) -> f64 {
    if batch.is_empty() {
        return 0.0;
    }
    let scale = 1.0 / batch.len() as f64;
    let mut total: Grad = HashMap::new();
    let mut loss = 0.0;
    for ex in batch {
        let (l, g) = loss_and_grad(model, ex);
        loss += l;
        for (f, row) in g {
            match total.get_mut(&f) {
                Some(acc) => {
                    for (a, x) in acc.iter_mut().zip(&row) {
                        *a += x;
                    }
                }
                None => {
                    total.insert(f, row);
                }
            }
        }
    }
    if lr != 0.0 {
        // entries are independent, so the map's iteration order does not
        // affect the result
        for (f, row) in total {
            let w = model.params.row_mut(f);
            for (wi, g) in w.iter_mut().zip(&row) {
                *wi -= lr * scale * g;
            }
        }
    }
    loss * scale
}

#[cfg(test)]
mod tests {
    use super::super::{decode, DecodeMode, ModelConfig, Vocab};
    use super::*;
    use crate::rng::stream;
    use crate::seq::{format_corrector_input, tokenize};
    use rand::Rng as _;

    fn model_with(words: &[&str], l2: f64) -> ToyModel {
        let vocab = Vocab::new(words.iter().copied()).unwrap();
        ToyModel::new(
            vocab,
            &ModelConfig {
                l2,
                ..Default::default()
            },
        )
    }

    #[test]
    fn uniform_model_loss_is_log_vocab() {
        // 6 reserved tokens + 10 words = 16
        let words: Vec<String> = (0..10).map(|i| format!("w{i}")).collect();
        let refs: Vec<&str> = words.iter().map(String::as_str).collect();
        let m = model_with(&refs, 0.0);
        assert_eq!(m.vocab.len(), 16);
        let ex = TrainingExample::new(
            format_corrector_input(&tokenize("w1"), &tokenize("w2 w3"), None),
            &tokenize("w4 w5 w6"),
        );
        let (loss, _) = loss_and_grad(&m, &ex);
        assert!((loss - 16f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn zero_lr_leaves_params() {
        let mut m = model_with(&["a", "b"], 0.01);
        m.params.set(5, 6, 0.3);
        let before = m.params.clone();
        let ex = TrainingExample::new(format_corrector_input(&tokenize("a"), &tokenize("b"), None), &tokenize("a b"));
        train_batch(&mut m, &[ex], 0.0);
        assert_eq!(m.params.entries(), before.entries());
    }

    #[test]
    fn identical_batch_equals_single_step() {
        let ex = TrainingExample::new(format_corrector_input(&tokenize("a"), &tokenize("b"), None), &tokenize("a b a"));
        let mut one = model_with(&["a", "b"], 0.01);
        let mut three = one.clone();
        train_batch(&mut one, std::slice::from_ref(&ex), 0.3);
        train_batch(&mut three, &[ex.clone(), ex.clone(), ex], 0.3);
        for ((f1, t1, w1), (f3, t3, w3)) in one.params.entries().into_iter().zip(three.params.entries()) {
            assert_eq!((f1, t1), (f3, t3));
            assert!((w1 - w3).abs() < 1e-12);
        }
    }

    #[test]
    fn overfits_a_single_example() {
        let mut m = model_with(&["the", "dog", "runs", "fast", "cat", "."], 0.0);
        let ctx = format_corrector_input(&tokenize("dog runs"), &tokenize("the cat"), None);
        let target = tokenize("the dog runs fast .");
        let ex = TrainingExample::new(ctx.clone(), &target);
        for _ in 0..200 {
            train_batch(&mut m, std::slice::from_ref(&ex), 0.5);
        }
        let mut rng = stream(0, &[]);
        let out = decode(&m, &ctx, DecodeMode::Greedy, 20, &mut rng);
        assert_eq!(out[0], target);
    }

    #[test]
    fn loss_descends_on_a_fixed_batch() {
        let mut m = model_with(&["a", "b", "c", "d"], 1e-3);
        let batch: Vec<TrainingExample> = ["a b c", "b c d", "a a d"]
            .iter()
            .enumerate()
            .map(|(i, t)| {
                TrainingExample::new(
                    format_corrector_input(&tokenize(&format!("p{i}")), &tokenize("c"), None),
                    &tokenize(t),
                )
            })
            .collect();
        let mut last = f64::INFINITY;
        for _ in 0..100 {
            let l = train_batch(&mut m, &batch, 0.1);
            assert!(l <= last + 1e-12, "{l} > {last}");
            last = l;
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = stream(5, &[]);
        let words = ["a", "b", "c", "d", "e"];
        for _ in 0..20 {
            let mut m = model_with(&words, rng.gen_range(0.0..0.1));
            let pick = |rng: &mut crate::rng::Rng, n: usize| {
                TokenSeq::from_tokens((0..n).map(|_| words[rng.gen_range(0..words.len())]))
            };
            let (nx, ny, nt) = (rng.gen_range(0..4), rng.gen_range(0..4), rng.gen_range(1..5));
            let ex = TrainingExample::new(format_corrector_input(&pick(&mut rng, nx), &pick(&mut rng, ny), None), &pick(&mut rng, nt));
            let (_, grad) = loss_and_grad(&m, &ex);
            let keys: Vec<u64> = grad.keys().copied().collect();
            for &f in &keys {
                for t in 0..m.vocab.len() as u32 {
                    m.params.set(f, t, rng.gen_range(-1.0..1.0));
                }
            }
            let (_, grad) = loss_and_grad(&m, &ex);
            let eps = 1e-5;
            for &f in &keys {
                for t in 0..m.vocab.len() as u32 {
                    let w = m.params.get(f, t);
                    m.params.set(f, t, w + eps);
                    let up = loss_and_grad(&m, &ex).0;
                    m.params.set(f, t, w - eps);
                    let down = loss_and_grad(&m, &ex).0;
                    m.params.set(f, t, w);
                    let fd = (up - down) / (2.0 * eps);
                    let an = grad[&f][t as usize];
                    let err = (fd - an).abs() / fd.abs().max(an.abs()).max(1e-3);
                    assert!(err < 1e-4, "feature {f} token {t}: fd {fd} analytic {an}");
                }
            }
        }
    }
}
