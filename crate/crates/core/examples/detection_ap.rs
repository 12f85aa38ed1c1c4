//! Class-agnostic COCO-style AP over hand-made detections.

use saliency_prompt::eval::{average_precision, DetectionRecord, Prediction};
use saliency_prompt::tensor::Rect;

fn main() {
    let p = |x0, y0, x1, y1, score| Prediction {
        rect: Rect::new(x0, y0, x1, y1),
        score,
    };
    let records = vec![
        DetectionRecord {
            predictions: vec![p(0, 0, 9, 9, 0.9), p(30, 30, 35, 35, 0.6)],
            ground_truth: vec![Rect::new(0, 0, 9, 10), Rect::new(20, 20, 27, 27)],
        },
        DetectionRecord {
            predictions: vec![p(5, 5, 14, 14, 0.8)],
            ground_truth: vec![Rect::new(6, 6, 14, 14)],
        },
    ];
    let rep = average_precision(&records);
    println!("AP   {:.4}", rep.ap.unwrap());
    println!("AP50 {:.4}", rep.ap50.unwrap());
    println!("AP75 {:.4}", rep.ap75.unwrap());
}
