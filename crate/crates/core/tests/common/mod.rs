//! Shared fixtures and harnesses for the integration and acceptance suites.

#![allow(dead_code)]

use codemix::dataset::{LabeledCorpus, LabeledExample};
use codemix::model::{
    attention_pool, attention_pool_backward, classify, classify_backward, mean_pool,
    mean_pool_backward,
};
use codemix::nn::{
    dropout, dropout_backward, embedding_backward, embedding_lookup, gelu, gelu_backward,
    grad_check, layer_norm, layer_norm_backward, linear, linear_backward, multi_head_attention,
    multi_head_attention_backward, softmax_rows, softmax_rows_backward, AttentionGrads,
    AttentionParams, GradCheckReport, ParamStore, Tensor, LAYER_NORM_EPS,
};
use codemix::rng::SplitMix64;
use codemix::textprep::{build_vocab, Vocab};

pub fn random_tensor(rng: &mut SplitMix64, shape: &[usize], std: f64) -> Tensor {
    let mut t = Tensor::zeros(shape);
    t.fill_normal(rng, std);
    t
}

fn weighted_sum(y: &Tensor, weights: &Tensor) -> f64 {
    y.data()
        .iter()
        .zip(weights.data())
        .map(|(a, b)| a * b)
        .sum()
}

/// A batch mask where every row keeps at least its first position live.
fn random_mask(rng: &mut SplitMix64, rows: usize, cols: usize) -> Vec<u8> {
    let mut mask = vec![0u8; rows * cols];
    for i in 0..rows {
        mask[i * cols] = 1;
        for j in 1..cols {
            mask[i * cols + j] = (rng.next_f64() < 0.7) as u8;
        }
    }
    mask
}

pub fn check_linear(seed: u64, tol: f64) -> GradCheckReport {
    let mut rng = SplitMix64::new(seed);
    let mut ps = ParamStore::new();
    ps.insert("x", random_tensor(&mut rng, &[4, 8], 1.0))
        .unwrap();
    ps.insert("w", random_tensor(&mut rng, &[8, 16], 1.0))
        .unwrap();
    ps.insert("b", random_tensor(&mut rng, &[16], 1.0)).unwrap();
    let loss_w = random_tensor(&mut rng, &[4, 16], 1.0);

    let dy = loss_w.clone();
    let x = ps.value("x").clone();
    let w = ps.value("w").clone();
    let mut dw = Tensor::zeros(&[8, 16]);
    let mut db = Tensor::zeros(&[16]);
    let dx = linear_backward(&x, &w, &dy, &mut dw, &mut db).unwrap();
    ps.grad_mut("x").add_assign(&dx).unwrap();
    ps.grad_mut("w").add_assign(&dw).unwrap();
    ps.grad_mut("b").add_assign(&db).unwrap();

    grad_check(
        &mut ps,
        move |p| {
            let y = linear(p.value("x"), p.value("w"), p.value("b")).unwrap();
            weighted_sum(&y, &loss_w)
        },
        1e-5,
        tol,
    )
}

pub fn check_softmax(seed: u64, tol: f64) -> GradCheckReport {
    let mut rng = SplitMix64::new(seed);
    let mut ps = ParamStore::new();
    ps.insert("x", random_tensor(&mut rng, &[4, 8], 1.5))
        .unwrap();
    let mask = random_mask(&mut rng, 4, 8);
    let loss_w = random_tensor(&mut rng, &[4, 8], 1.0);

    let y = softmax_rows(ps.value("x"), Some(&mask)).unwrap();
    let ds = softmax_rows_backward(&y, &loss_w, Some(&mask));
    ps.grad_mut("x").add_assign(&ds).unwrap();

    let mask2 = mask.clone();
    grad_check(
        &mut ps,
        move |p| {
            let y = softmax_rows(p.value("x"), Some(&mask2)).unwrap();
            weighted_sum(&y, &loss_w)
        },
        1e-5,
        tol,
    )
}

pub fn check_layer_norm(seed: u64, tol: f64) -> GradCheckReport {
    let mut rng = SplitMix64::new(seed);
    let mut ps = ParamStore::new();
    ps.insert("x", random_tensor(&mut rng, &[4, 8], 1.0))
        .unwrap();
    ps.insert("gamma", random_tensor(&mut rng, &[8], 0.5))
        .unwrap();
    ps.insert("beta", random_tensor(&mut rng, &[8], 0.5))
        .unwrap();
    let loss_w = random_tensor(&mut rng, &[4, 8], 1.0);

    let (_, cache) = layer_norm(
        ps.value("x"),
        ps.value("gamma"),
        ps.value("beta"),
        LAYER_NORM_EPS,
    )
    .unwrap();
    let mut dgamma = Tensor::zeros(&[8]);
    let mut dbeta = Tensor::zeros(&[8]);
    let dx = layer_norm_backward(&cache, ps.value("gamma"), &loss_w, &mut dgamma, &mut dbeta);
    ps.grad_mut("x").add_assign(&dx).unwrap();
    ps.grad_mut("gamma").add_assign(&dgamma).unwrap();
    ps.grad_mut("beta").add_assign(&dbeta).unwrap();

    grad_check(
        &mut ps,
        move |p| {
            let (y, _) = layer_norm(
                p.value("x"),
                p.value("gamma"),
                p.value("beta"),
                LAYER_NORM_EPS,
            )
            .unwrap();
            weighted_sum(&y, &loss_w)
        },
        1e-5,
        tol,
    )
}

pub fn check_gelu(seed: u64, tol: f64) -> GradCheckReport {
    let mut rng = SplitMix64::new(seed);
    let mut ps = ParamStore::new();
    ps.insert("x", random_tensor(&mut rng, &[4, 8], 1.5))
        .unwrap();
    let loss_w = random_tensor(&mut rng, &[4, 8], 1.0);

    let dx = gelu_backward(ps.value("x"), &loss_w);
    ps.grad_mut("x").add_assign(&dx).unwrap();

    grad_check(
        &mut ps,
        move |p| weighted_sum(&gelu(p.value("x")), &loss_w),
        1e-5,
        tol,
    )
}

pub fn check_embedding(seed: u64, tol: f64) -> GradCheckReport {
    let mut rng = SplitMix64::new(seed);
    let mut ps = ParamStore::new();
    ps.insert("table", random_tensor(&mut rng, &[10, 8], 1.0))
        .unwrap();
    let ids: Vec<u32> = (0..7).map(|_| rng.next_below(10) as u32).collect();
    let loss_w = random_tensor(&mut rng, &[7, 8], 1.0);

    let mut dtable = Tensor::zeros(&[10, 8]);
    embedding_backward(&ids, &loss_w, &mut dtable);
    ps.grad_mut("table").add_assign(&dtable).unwrap();

    let ids2 = ids.clone();
    grad_check(
        &mut ps,
        move |p| {
            let y = embedding_lookup(&ids2, p.value("table")).unwrap();
            weighted_sum(&y, &loss_w)
        },
        1e-5,
        tol,
    )
}

pub fn check_dropout(seed: u64, tol: f64) -> GradCheckReport {
    let mut rng = SplitMix64::new(seed);
    let mut ps = ParamStore::new();
    ps.insert("x", random_tensor(&mut rng, &[4, 8], 1.0))
        .unwrap();
    let loss_w = random_tensor(&mut rng, &[4, 8], 1.0);
    let drop_seed = rng.next_u64();

    let (_, mask) = dropout(ps.value("x"), 0.35, true, drop_seed).unwrap();
    let dx = dropout_backward(&mask, &loss_w);
    ps.grad_mut("x").add_assign(&dx).unwrap();

    grad_check(
        &mut ps,
        move |p| {
            // same seed, same mask: the perturbed loss stays differentiable
            let (y, _) = dropout(p.value("x"), 0.35, true, drop_seed).unwrap();
            weighted_sum(&y, &loss_w)
        },
        1e-5,
        tol,
    )
}

pub fn check_attention(seed: u64, tol: f64) -> GradCheckReport {
    let mut rng = SplitMix64::new(seed);
    let (batch, seq, d) = (2usize, 4usize, 8usize);
    let mut ps = ParamStore::new();
    ps.insert("x", random_tensor(&mut rng, &[batch * seq, d], 1.0))
        .unwrap();
    for name in ["wq", "wk", "wv", "wo"] {
        ps.insert(name, random_tensor(&mut rng, &[d, d], 0.5))
            .unwrap();
    }
    for name in ["bq", "bk", "bv", "bo"] {
        ps.insert(name, random_tensor(&mut rng, &[d], 0.2)).unwrap();
    }
    let mask = random_mask(&mut rng, batch, seq);
    let loss_w = random_tensor(&mut rng, &[batch * seq, d], 1.0);

    fn params_of(p: &ParamStore) -> AttentionParams<'_> {
        AttentionParams {
            wq: p.value("wq"),
            bq: p.value("bq"),
            wk: p.value("wk"),
            bk: p.value("bk"),
            wv: p.value("wv"),
            bv: p.value("bv"),
            wo: p.value("wo"),
            bo: p.value("bo"),
        }
    }

    let (_, cache) =
        multi_head_attention(ps.value("x"), batch, seq, &mask, &params_of(&ps), 2).unwrap();
    let mut bufs: Vec<Tensor> = vec![
        Tensor::zeros(&[d, d]),
        Tensor::zeros(&[d]),
        Tensor::zeros(&[d, d]),
        Tensor::zeros(&[d]),
        Tensor::zeros(&[d, d]),
        Tensor::zeros(&[d]),
        Tensor::zeros(&[d, d]),
        Tensor::zeros(&[d]),
    ];
    let x = ps.value("x").clone();
    let dx = {
        let (a, rest) = bufs.split_at_mut(1);
        let (b, rest) = rest.split_at_mut(1);
        let (c, rest) = rest.split_at_mut(1);
        let (e, rest) = rest.split_at_mut(1);
        let (f, rest) = rest.split_at_mut(1);
        let (g, rest) = rest.split_at_mut(1);
        let (h, i) = rest.split_at_mut(1);
        let mut grads = AttentionGrads {
            wq: &mut a[0],
            bq: &mut b[0],
            wk: &mut c[0],
            bk: &mut e[0],
            wv: &mut f[0],
            bv: &mut g[0],
            wo: &mut h[0],
            bo: &mut i[0],
        };
        multi_head_attention_backward(
            &x,
            batch,
            seq,
            &mask,
            &params_of(&ps),
            &cache,
            &loss_w,
            &mut grads,
        )
        .unwrap()
    };
    ps.grad_mut("x").add_assign(&dx).unwrap();
    for (name, buf) in ["wq", "bq", "wk", "bk", "wv", "bv", "wo", "bo"]
        .iter()
        .zip(&bufs)
    {
        ps.grad_mut(name).add_assign(buf).unwrap();
    }

    let mask2 = mask.clone();
    grad_check(
        &mut ps,
        move |p| {
            let (y, _) =
                multi_head_attention(p.value("x"), batch, seq, &mask2, &params_of(p), 2).unwrap();
            weighted_sum(&y, &loss_w)
        },
        1e-5,
        tol,
    )
}

pub fn check_attention_pool(seed: u64, tol: f64) -> GradCheckReport {
    let mut rng = SplitMix64::new(seed);
    let (batch, seq, d) = (2usize, 4usize, 8usize);
    let mut ps = ParamStore::new();
    ps.insert("hidden", random_tensor(&mut rng, &[batch * seq, d], 1.0))
        .unwrap();
    ps.insert("query", random_tensor(&mut rng, &[d], 0.5))
        .unwrap();
    ps.insert("proj", random_tensor(&mut rng, &[d, d], 0.5))
        .unwrap();
    let mask = random_mask(&mut rng, batch, seq);
    let loss_w = random_tensor(&mut rng, &[batch, d], 1.0);

    let (_, cache) = attention_pool(
        ps.value("hidden"),
        batch,
        seq,
        &mask,
        ps.value("query"),
        ps.value("proj"),
    )
    .unwrap();
    let mut dquery = Tensor::zeros(&[d]);
    let mut dproj = Tensor::zeros(&[d, d]);
    let dh = attention_pool_backward(
        ps.value("hidden"),
        batch,
        seq,
        &mask,
        ps.value("query"),
        ps.value("proj"),
        &cache,
        &loss_w,
        &mut dquery,
        &mut dproj,
    )
    .unwrap();
    ps.grad_mut("hidden").add_assign(&dh).unwrap();
    ps.grad_mut("query").add_assign(&dquery).unwrap();
    ps.grad_mut("proj").add_assign(&dproj).unwrap();

    let mask2 = mask.clone();
    grad_check(
        &mut ps,
        move |p| {
            let (y, _) = attention_pool(
                p.value("hidden"),
                batch,
                seq,
                &mask2,
                p.value("query"),
                p.value("proj"),
            )
            .unwrap();
            weighted_sum(&y, &loss_w)
        },
        1e-5,
        tol,
    )
}

pub fn check_mean_pool(seed: u64, tol: f64) -> GradCheckReport {
    let mut rng = SplitMix64::new(seed);
    let (batch, seq, d) = (2usize, 4usize, 8usize);
    let mut ps = ParamStore::new();
    ps.insert("hidden", random_tensor(&mut rng, &[batch * seq, d], 1.0))
        .unwrap();
    let mask = random_mask(&mut rng, batch, seq);
    let loss_w = random_tensor(&mut rng, &[batch, d], 1.0);

    let dh = mean_pool_backward(batch, seq, d, &mask, &loss_w);
    ps.grad_mut("hidden").add_assign(&dh).unwrap();

    let mask2 = mask.clone();
    grad_check(
        &mut ps,
        move |p| {
            let y = mean_pool(p.value("hidden"), batch, seq, &mask2).unwrap();
            weighted_sum(&y, &loss_w)
        },
        1e-5,
        tol,
    )
}

pub fn check_classifier(seed: u64, tol: f64) -> GradCheckReport {
    let mut rng = SplitMix64::new(seed);
    let mut ps = ParamStore::new();
    ps.insert("pooled", random_tensor(&mut rng, &[3, 8], 1.0))
        .unwrap();
    ps.insert("w", random_tensor(&mut rng, &[8, 4], 0.5))
        .unwrap();
    ps.insert("b", random_tensor(&mut rng, &[4], 0.2)).unwrap();
    let loss_w = random_tensor(&mut rng, &[3, 4], 1.0);
    let drop_seed = rng.next_u64();

    let (probs, cache) = classify(
        ps.value("pooled"),
        ps.value("w"),
        ps.value("b"),
        0.3,
        true,
        drop_seed,
    )
    .unwrap();
    let d_logits = softmax_rows_backward(&probs, &loss_w, None);
    let mut dw = Tensor::zeros(&[8, 4]);
    let mut db = Tensor::zeros(&[4]);
    let d_pooled = classify_backward(&cache, ps.value("w"), &d_logits, &mut dw, &mut db).unwrap();
    ps.grad_mut("pooled").add_assign(&d_pooled).unwrap();
    ps.grad_mut("w").add_assign(&dw).unwrap();
    ps.grad_mut("b").add_assign(&db).unwrap();

    grad_check(
        &mut ps,
        move |p| {
            let (probs, _) = classify(
                p.value("pooled"),
                p.value("w"),
                p.value("b"),
                0.3,
                true,
                drop_seed,
            )
            .unwrap();
            weighted_sum(&probs, &loss_w)
        },
        1e-5,
        tol,
    )
}

/// Every parameterized layer harness, by name.
pub fn all_layer_checks(seed: u64, tol: f64) -> Vec<(&'static str, GradCheckReport)> {
    vec![
        ("linear", check_linear(seed, tol)),
        ("softmax_rows", check_softmax(seed, tol)),
        ("layer_norm", check_layer_norm(seed, tol)),
        ("gelu", check_gelu(seed, tol)),
        ("embedding_lookup", check_embedding(seed, tol)),
        ("dropout", check_dropout(seed, tol)),
        ("multi_head_attention", check_attention(seed, tol)),
        ("attention_pool", check_attention_pool(seed, tol)),
        ("mean_pool", check_mean_pool(seed, tol)),
        ("classifier", check_classifier(seed, tol)),
    ]
}

/// 64 deterministic examples where the token "bad1" forces class 1.
pub fn separable_corpus() -> LabeledCorpus {
    let good = ["good1", "good2", "good3", "good4", "good5", "good6"];
    let mut rng = SplitMix64::new(2718);
    let mut corpus = LabeledCorpus::new(vec!["NOT".to_string(), "HOF".to_string()]);
    for i in 0..64 {
        let label = i % 2;
        let len = 2 + (rng.next_below(3) as usize);
        let mut words: Vec<String> = (0..len)
            .map(|_| good[rng.next_below(good.len() as u64) as usize].to_string())
            .collect();
        if label == 1 {
            let pos = rng.next_below(words.len() as u64 + 1) as usize;
            words.insert(pos, "bad1".to_string());
        }
        corpus
            .push(LabeledExample {
                id: i.to_string(),
                text: words.join(" "),
                label,
            })
            .unwrap();
    }
    corpus
}

pub fn corpus_vocab(corpus: &LabeledCorpus) -> Vocab {
    let texts: Vec<&str> = corpus.examples().iter().map(|e| e.text.as_str()).collect();
    build_vocab(&texts, 200, 1)
}

const URL_PIECES: &[&str] = &[
    "https://t.co/xYz123",
    "http://example.com/a?b=1#frag",
    "HTTP://LOUD.EXAMPLE/PATH",
    "www.youtube.com/watch?v=dQw4",
    "WWW.CAPS.ORG",
    "ftp://files.example.org/x.zip",
    "Https://Mixed.Case/Path,trailing",
];
const MENTION_PIECES: &[&str] = &["@user", "@USER_123", "@தமிழ்", "@@double", "@"];
const EMOJI_PIECES: &[&str] = &[
    "\u{1F600}",
    "\u{1F602}\u{1F923}",
    "\u{1F680}",
    "\u{1F1EE}\u{1F1F3}",
    "\u{2600}",
    "\u{2728}",
    "\u{1F973}",
    "\u{1FA94}",
    "\u{FE0F}",
    "\u{1F44D}\u{1F3FD}",
];
const PUNCT_PIECES: &[&str] = &[
    "!!!",
    "...",
    "?!",
    "\u{00AB}\u{00BB}",
    "\u{0964}",
    "\u{2014}",
    "()",
    "[]",
    ";:,",
];
const WORD_PIECES: &[&str] = &[
    "This",
    "IS",
    "a",
    "Movie",
    "VERA",
    "level",
    "Mass",
    "semma",
    "படம்",
    "நல்ல",
    "சூப்பர்",
    "Thalaivaa",
    "123",
    "é",
    "ÀÉÎ",
    "kadavul",
];

/// Build a hostile input by splicing URLs, mentions, emoji, punctuation, and
/// mixed-script words with unpredictable glue. Pieces are chosen so that the
/// letters "http" can only ever appear as part of a removable URL.
pub fn adversarial_string(rng: &mut SplitMix64) -> String {
    let n = 3 + rng.next_below(10) as usize;
    let mut out = String::new();
    for i in 0..n {
        if i > 0 {
            match rng.next_below(4) {
                0 => out.push(' '),
                1 => out.push('\t'),
                2 => out.push_str("  "),
                _ => {} // glued directly to the previous piece
            }
        }
        let piece = match rng.next_below(5) {
            0 => URL_PIECES[rng.next_below(URL_PIECES.len() as u64) as usize],
            1 => MENTION_PIECES[rng.next_below(MENTION_PIECES.len() as u64) as usize],
            2 => EMOJI_PIECES[rng.next_below(EMOJI_PIECES.len() as u64) as usize],
            3 => PUNCT_PIECES[rng.next_below(PUNCT_PIECES.len() as u64) as usize],
            _ => WORD_PIECES[rng.next_below(WORD_PIECES.len() as u64) as usize],
        };
        out.push_str(piece);
    }
    out
}

/// Emoji-block membership, re-stated independently of the library.
pub fn in_emoji_block(c: char) -> bool {
    matches!(u32::from(c),
        0x1F300..=0x1F5FF
        | 0x1F600..=0x1F64F
        | 0x1F680..=0x1F6FF
        | 0x1F900..=0x1F9FF
        | 0x1FA70..=0x1FAFF
        | 0x2600..=0x27BF
        | 0xFE0F
        | 0x1F1E6..=0x1F1FF)
}

/// Independent weighted-metric oracle working straight off the pairs.
pub fn brute_force_weighted(
    preds: &[usize],
    labels: &[usize],
    n_classes: usize,
) -> (f64, f64, f64) {
    let total = labels.len() as f64;
    let (mut wp, mut wr, mut wf) = (0.0, 0.0, 0.0);
    for k in 0..n_classes {
        let tp = preds
            .iter()
            .zip(labels)
            .filter(|(&p, &t)| p == k && t == k)
            .count() as f64;
        let pred_k = preds.iter().filter(|&&p| p == k).count() as f64;
        let sup_k = labels.iter().filter(|&&t| t == k).count() as f64;
        let p = if pred_k == 0.0 { 0.0 } else { tp / pred_k };
        let r = if sup_k == 0.0 { 0.0 } else { tp / sup_k };
        let f = if p + r == 0.0 {
            0.0
        } else {
            2.0 * p * r / (p + r)
        };
        wp += sup_k / total * p;
        wr += sup_k / total * r;
        wf += sup_k / total * f;
    }
    (wp, wr, wf)
}
