//! Print the warmup-then-cosine learning rate of the desk training profile.

use twostage::pipeline::TrainConfig;

fn main() -> twostage::Result<()> {
    let config = TrainConfig::desk(0);
    let total = config.epochs * 734usize.div_ceil(config.batch_size);
    let schedule = config.schedule.schedule(total)?;
    println!("{total} steps, {} warmup", schedule.warmup_steps);
    let marks = [0, schedule.warmup_steps - 1, schedule.warmup_steps, total / 2, total * 3 / 4, total - 1];
    for step in marks {
        println!("step {step:>5}  lr {:.6e}", schedule.lr_at(step)?);
    }
    Ok(())
}
