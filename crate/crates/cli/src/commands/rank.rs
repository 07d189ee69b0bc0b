use attrank::checkpoint::load_checkpoint;
use attrank::eval::{model_global_ranking, write_ranking_csv};

use crate::config::Resolved;
use crate::{CliError, RankArgs};

const KEYS: &[&str] = &["ckpt", "data", "out"];

pub fn run(args: RankArgs) -> Result<(), CliError> {
    let _file = super::file_overlay(&args.config, "rank", KEYS)?;
    let dataset = super::dataset(&args.data)?;
    let ckpt = load_checkpoint(&args.ckpt)?;

    let ids: Vec<String> = dataset.samples.keys().cloned().collect();
    let ranking = model_global_ranking(&ckpt.model, &dataset, &ids)?;

    let mut echo = Resolved::new("rank");
    echo.set("ckpt", args.ckpt.display());
    echo.set("data", args.data.display());
    echo.set("out", args.out.display());
    echo.write_echo(&args.out)?;

    let csv_path = args.out.join("ranking.csv");
    write_ranking_csv(&ranking, &csv_path)?;
    println!("ranked {} images into {}", ranking.entries.len(), csv_path.display());
    Ok(())
}
