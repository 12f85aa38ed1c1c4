//! Write a tensor to the binary container and read it back.
//!
//! Usage: `cargo run --example tensor_io [path]`

use saliency_prompt::tensor::{read_tensor, write_tensor, Tensor, MAGIC};

fn main() -> saliency_prompt::Result<()> {
    let path = std::env::args().nth(1).unwrap_or_else(|| {
        std::env::temp_dir()
            .join("example.sptensor")
            .display()
            .to_string()
    });
    let t = Tensor::from_fn(&[2, 3, 4], |i| (i as f64).sqrt() - 1.5);
    write_tensor(&path, &t)?;
    let bytes = std::fs::read(&path).map_err(saliency_prompt::Error::Stream)?;
    println!("wrote {} bytes to {path}", bytes.len());
    println!(
        "magic: {:?}",
        std::str::from_utf8(&bytes[..MAGIC.len()]).unwrap()
    );
    let back = read_tensor(&path)?;
    println!("shape {:?}, bit-identical: {}", back.shape(), back == t);
    Ok(())
}
