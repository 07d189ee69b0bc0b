use std::str::FromStr;

use attrank::checkpoint::load_checkpoint;
use attrank::saliency::{export_csv, export_heatmap, saliency_pair, ChannelReduce, SmoothingConfig};

use crate::config::{resolve, resolve_flag, Resolved};
use crate::{CliError, SaliencyArgs};

const KEYS: &[&str] = &["ckpt", "data", "out", "n_pairs", "sigma", "channel_reduce", "dump_csv"];

pub fn run(args: SaliencyArgs) -> Result<(), CliError> {
    let file = super::file_overlay(&args.config, "saliency", KEYS)?;
    let n_pairs = resolve(args.n_pairs, &file, "n_pairs", 8)?;
    let sigma = resolve(args.sigma, &file, "sigma", 2.0)?;
    let reduce_text = resolve(args.channel_reduce, &file, "channel_reduce", "max".to_string())?;
    let reduce = ChannelReduce::from_str(&reduce_text)?;
    let dump_csv = resolve_flag(args.dump_csv, &file, "dump_csv")?;
    let smoothing = SmoothingConfig::new(sigma)?;

    let dataset = super::dataset(&args.data)?;
    if dataset.test_pairs.is_empty() {
        return Err(CliError::Data("dataset has no test pairs to render".into()));
    }
    let ckpt = load_checkpoint(&args.ckpt)?;

    let mut echo = Resolved::new("saliency");
    echo.set("ckpt", args.ckpt.display());
    echo.set("data", args.data.display());
    echo.set("out", args.out.display());
    echo.set("n_pairs", n_pairs);
    echo.set("sigma", sigma);
    echo.set("channel_reduce", reduce);
    echo.set("dump_csv", dump_csv);
    echo.write_echo(&args.out)?;

    let mut written = 0usize;
    for (index, pair) in dataset.test_pairs.iter().take(n_pairs).enumerate() {
        let sample_i = &dataset.samples[&pair.id_i];
        let sample_j = &dataset.samples[&pair.id_j];
        let (map_i, map_j) = saliency_pair(&ckpt.model, &sample_i.pixels, &sample_j.pixels, &smoothing, reduce)?;
        for (side, sample, sal) in [("i", sample_i, &map_i), ("j", sample_j, &map_j)] {
            let stem = format!("pair{index:03}_{}_{side}", sample.id);
            export_heatmap(&sal.map, &sample.pixels, &args.out.join(format!("{stem}.png")))?;
            if dump_csv {
                export_csv(&sal.map, &args.out.join(format!("{stem}.csv")))?;
            }
            written += 1;
        }
    }
    println!("wrote {written} saliency overlays to {}", args.out.display());
    Ok(())
}
