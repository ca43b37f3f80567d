//! Generate the default synthetic cohort in memory and print its count table.

use twostage::data::{generate_synthetic, split_by_gender, CohortCounts, CohortSpec, Split};

fn main() -> twostage::Result<()> {
    let mut spec = CohortSpec::with_seed(7);
    // Smaller volumes keep this quick; the counts are what matter here.
    spec.dims = [8, 16, 16];
    let dataset = generate_synthetic(&spec)?;

    print!("{}", CohortCounts::tally(dataset.samples()).render_table());
    let train = dataset.split(Split::Train);
    let (male, female) = split_by_gender(train.samples());
    println!("training samples by gender: {} male, {} female", male.len(), female.len());

    let first = &dataset.samples()[0];
    let volume = first.load_volume()?;
    println!("{} is {:?} with {} voxels", first.id, volume.dims(), volume.voxels().len());
    Ok(())
}
