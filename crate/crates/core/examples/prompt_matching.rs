//! Prompt injection: cosine matching is invariant to prompt order while
//! sequential assignment is not.

use saliency_prompt::prompting::{assign, inject, AssignStrategy, PromptSet};
use saliency_prompt::rng::SplitMix64;
use saliency_prompt::tensor::Tensor;

fn injected(strategy: AssignStrategy, k: &Tensor, p: &PromptSet) -> Tensor {
    let a = assign(strategy, k, p, 0).unwrap().unwrap();
    inject(k, p, &a.delta).unwrap()
}

fn main() {
    let (n, l, c) = (5, 3, 4);
    let mut rng = SplitMix64::new(9);
    let kernels = Tensor::from_fn(&[n, c], |_| rng.uniform(-1.0, 1.0));
    let prompts = PromptSet {
        prompts: Tensor::from_fn(&[l, c], |_| rng.uniform(-1.0, 1.0)),
        source: (0..l).collect(),
    };
    let shuffled = prompts.permuted(&[2, 0, 1]);

    for strategy in [AssignStrategy::Cosine, AssignStrategy::Sequential] {
        let a = assign(strategy, &kernels, &prompts, 0).unwrap().unwrap();
        let same =
            injected(strategy, &kernels, &prompts) == injected(strategy, &kernels, &shuffled);
        println!(
            "{:<10} delta {:?}  unchanged under prompt permutation: {same}",
            strategy.name(),
            a.delta
        );
    }
}
