//! Seeded generators against stored reference outputs.

use serde_json::Value;

use saliency_prompt::prompting::match_random;
use saliency_prompt::proposal::random_proposals;

fn golden(name: &str) -> Value {
    let path = format!("{}/tests/golden/{name}", env!("CARGO_MANIFEST_DIR"));
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn as_usize(v: &Value) -> usize {
    v.as_u64().unwrap() as usize
}

#[test]
fn random_proposals_match_golden_file() {
    let g = golden("random_proposals_seed7.json");
    let props = random_proposals(
        as_usize(&g["height"]),
        as_usize(&g["width"]),
        as_usize(&g["count"]),
        g["seed"].as_u64().unwrap(),
        g["min_area_fraction"].as_f64().unwrap(),
    )
    .unwrap();
    let want = g["proposals"].as_array().unwrap();
    assert_eq!(props.len(), want.len());
    for (p, w) in props.iter().zip(want) {
        let rect: Vec<usize> = w["box"].as_array().unwrap().iter().map(as_usize).collect();
        assert_eq!(p.rect.as_array().to_vec(), rect);
        assert_eq!(p.score.to_bits(), w["score"].as_f64().unwrap().to_bits());
        assert_eq!(p.area(), p.rect.area());
    }
}

#[test]
fn random_assignment_matches_golden_file() {
    let g = golden("match_random_seed3.json");
    let delta = match_random(
        as_usize(&g["kernels"]),
        as_usize(&g["prompts"]),
        g["seed"].as_u64().unwrap(),
    )
    .unwrap();
    let want: Vec<usize> = g["delta"]
        .as_array()
        .unwrap()
        .iter()
        .map(as_usize)
        .collect();
    assert_eq!(delta, want);
}
