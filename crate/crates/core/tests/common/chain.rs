//! Reference implementation of the ambiguity score, written separately
//! from the library: Bayes posterior from popularity (or predicate
//! frequency) prior and softmax(1/PPL) likelihood, softmax over the
//! posterior, then entropy divided by ln N.

pub fn levenshtein(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    for (i, ca) in a.iter().enumerate() {
        let mut cur = vec![i + 1; b.len() + 1];
        for (j, cb) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(ca != cb);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        prev = cur;
    }
    prev[b.len()]
}

/// exp(normalized edit distance).
pub fn mock_ppl(context: &str, continuation: &str) -> f64 {
    let longest = context.chars().count().max(continuation.chars().count());
    if longest == 0 {
        return 1.0;
    }
    (levenshtein(context, continuation) as f64 / longest as f64).exp()
}

pub fn entity_context(description: &str) -> String {
    let d = description.trim();
    format!("Description: {}\nQuestion: ", if d.is_empty() { "(none)" } else { d })
}

fn softmax(x: &[f64]) -> Vec<f64> {
    let m = x.iter().cloned().fold(f64::MIN, f64::max);
    let e: Vec<f64> = x.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.iter().map(|v| v / s).collect()
}

pub fn entropy_score(p: &[f64]) -> f64 {
    if p.len() == 1 {
        return 0.0;
    }
    let h: f64 = p.iter().filter(|&&v| v > 0.0).map(|v| -v * v.ln()).sum();
    h / (p.len() as f64).ln()
}

/// Final distribution and score for raw prior weights and perplexities.
pub fn score(weights: &[f64], ppls: &[f64]) -> (Vec<f64>, f64) {
    let n = weights.len();
    let total: f64 = weights.iter().sum();
    let prior: Vec<f64> = if total > 0.0 { weights.iter().map(|w| w / total).collect() } else { vec![1.0 / n as f64; n] };
    let lik = softmax(&ppls.iter().map(|p| 1.0 / p).collect::<Vec<_>>());
    let joint: Vec<f64> = prior.iter().zip(&lik).map(|(a, b)| a * b).collect();
    let z: f64 = joint.iter().sum();
    let post: Vec<f64> = joint.iter().map(|j| j / z).collect();
    let p = softmax(&post);
    let s = entropy_score(&p);
    (p, s)
}
