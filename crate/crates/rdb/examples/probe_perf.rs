use rdb::encoder::{EncoderConfig, MmdConfig, SpatialEncoder};
use rdb::frame::ImageFrame;
use rdb::rng::SeedRng;
use std::time::Instant;

fn main() {
    let enc = SpatialEncoder::new(EncoderConfig::small(), 1);
    let mut rng = SeedRng::new(2);
    let img = ImageFrame::new(0, (0..ImageFrame::len()).map(|_| rng.uniform()).collect()).unwrap();
    let batch: Vec<ImageFrame> = (0..8).map(|_| img.clone()).collect();
    let mmd = MmdConfig::default();
    let mut grads = vec![0.0; enc.param_count()];

    let t = Instant::now();
    for _ in 0..10 {
        use rdb::encoder::SceneCodec;
        let l = enc.encode(&img).unwrap();
        let _ = enc.decode(&l).unwrap();
    }
    println!("encode+decode x10: {:?}", t.elapsed());

    let t = Instant::now();
    for _ in 0..3 {
        grads.iter_mut().for_each(|g| *g = 0.0);
        let _ = enc.r_loss_grad(&batch, &mmd, 1, &mut grads).unwrap();
    }
    println!("r_loss_grad(batch 8) x3: {:?}", t.elapsed());
    println!("params: {}", enc.param_count());
}
