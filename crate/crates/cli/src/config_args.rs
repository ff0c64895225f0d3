//! Command-line flags mirroring every key of the TOML config.
//!
//! A key `section.name` maps to the flag `--section-name` (underscores
//! become dashes) and the top-level `seed` to `--seed`.

use std::path::PathBuf;

use clap::Args;
use linescan::config::GlobalConfig;
use linescan::similarity::ShapeMeasure;

fn parse_shape_measure(s: &str) -> Result<ShapeMeasure, String> {
    match s {
        "candidate" => Ok(ShapeMeasure::Candidate),
        "symmetric" => Ok(ShapeMeasure::Symmetric),
        other => Err(format!("unknown shape measure {other:?}; expected candidate or symmetric")),
    }
}

#[derive(Debug, Clone, Default, Args)]
pub struct ConfigArgs {
    /// TOML config file; flags below override its values.
    #[arg(long, global = true, env = "LINESCAN_CONFIG", value_name = "PATH")]
    pub config: Option<PathBuf>,

    /// Seed of network initialization and of the train/test split.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Superpixel seed budget for a full image.
    #[arg(long, visible_alias = "k", global = true, help_heading = "SLIC")]
    pub slic_k_init: Option<usize>,
    /// Weight of spatial against color distance.
    #[arg(long, visible_alias = "compactness", global = true, help_heading = "SLIC")]
    pub slic_compactness: Option<f64>,
    #[arg(long, global = true, help_heading = "SLIC")]
    pub slic_max_iters: Option<usize>,
    /// Fragments below this fraction of the mean superpixel area are absorbed.
    #[arg(long, global = true, help_heading = "SLIC")]
    pub slic_min_region_frac: Option<f64>,

    /// Number of convolution modules.
    #[arg(long, global = true, help_heading = "Network")]
    pub muis_m_layers: Option<usize>,
    /// Feature width, also the initial class count.
    #[arg(long, global = true, help_heading = "Network")]
    pub muis_channels: Option<usize>,
    #[arg(long, global = true, help_heading = "Network")]
    pub muis_lr: Option<f64>,
    #[arg(long, global = true, help_heading = "Network")]
    pub muis_momentum: Option<f64>,
    #[arg(long, global = true, help_heading = "Network")]
    pub muis_max_iters: Option<usize>,
    /// Training stops at or below this many labels.
    #[arg(long, global = true, help_heading = "Network")]
    pub muis_q_min: Option<usize>,
    #[arg(long, global = true, help_heading = "Network")]
    pub muis_bn_eps: Option<f64>,

    /// Weight of color against shape in the combined score.
    #[arg(long, global = true, help_heading = "Similarity")]
    pub similarity_gamma: Option<f64>,
    /// Histogram bins per channel.
    #[arg(long, global = true, help_heading = "Similarity")]
    pub similarity_n_bins: Option<usize>,
    /// Coarse rotation step in degrees.
    #[arg(long, global = true, help_heading = "Similarity")]
    pub similarity_beta_step: Option<f64>,
    /// Coarse scale factors, comma separated and increasing.
    #[arg(long, global = true, value_delimiter = ',', help_heading = "Similarity")]
    pub similarity_alpha_grid: Option<Vec<f64>>,
    #[arg(long, global = true, help_heading = "Similarity")]
    pub similarity_refine_rounds: Option<usize>,
    #[arg(long, global = true, help_heading = "Similarity")]
    pub similarity_hist_smoothing: Option<f64>,
    /// candidate or symmetric.
    #[arg(long, global = true, value_parser = parse_shape_measure, help_heading = "Similarity")]
    pub similarity_shape_measure: Option<ShapeMeasure>,

    #[arg(long, global = true, help_heading = "Rules")]
    pub rules_tau_complete: Option<f64>,
    #[arg(long, global = true, help_heading = "Rules")]
    pub rules_tau_color: Option<f64>,
    #[arg(long, global = true, help_heading = "Rules")]
    pub rules_gamma_shape_rules: Option<f64>,
    #[arg(long, global = true, help_heading = "Rules")]
    pub rules_gamma_lightning_color: Option<f64>,
    #[arg(long, global = true, help_heading = "Rules")]
    pub rules_foreign_min_area_frac: Option<f64>,
    #[arg(long, global = true, help_heading = "Rules")]
    pub rules_foreign_max_background_similarity: Option<f64>,
}

fn set<T: Clone>(slot: &mut T, value: &Option<T>) {
    if let Some(v) = value {
        *slot = v.clone();
    }
}

impl ConfigArgs {
    /// Config file (if any) with the flag overrides applied, validated.
    pub fn resolve(&self) -> Result<GlobalConfig, linescan::config::ConfigError> {
        let mut cfg = match &self.config {
            Some(path) => GlobalConfig::load(path)?,
            None => GlobalConfig::default(),
        };
        self.apply(&mut cfg);
        cfg.validate()?;
        Ok(cfg)
    }

    fn apply(&self, cfg: &mut GlobalConfig) {
        set(&mut cfg.seed, &self.seed);

        let s = &mut cfg.slic;
        set(&mut s.k_init, &self.slic_k_init);
        set(&mut s.compactness, &self.slic_compactness);
        set(&mut s.max_iters, &self.slic_max_iters);
        set(&mut s.min_region_frac, &self.slic_min_region_frac);

        let m = &mut cfg.muis;
        set(&mut m.m_layers, &self.muis_m_layers);
        set(&mut m.channels, &self.muis_channels);
        set(&mut m.lr, &self.muis_lr);
        set(&mut m.momentum, &self.muis_momentum);
        set(&mut m.max_iters, &self.muis_max_iters);
        set(&mut m.q_min, &self.muis_q_min);
        set(&mut m.bn_eps, &self.muis_bn_eps);

        let sim = &mut cfg.similarity;
        set(&mut sim.gamma, &self.similarity_gamma);
        set(&mut sim.n_bins, &self.similarity_n_bins);
        set(&mut sim.beta_step, &self.similarity_beta_step);
        set(&mut sim.alpha_grid, &self.similarity_alpha_grid);
        set(&mut sim.refine_rounds, &self.similarity_refine_rounds);
        set(&mut sim.hist_smoothing, &self.similarity_hist_smoothing);
        set(&mut sim.shape_measure, &self.similarity_shape_measure);

        let r = &mut cfg.rules;
        set(&mut r.tau_complete, &self.rules_tau_complete);
        set(&mut r.tau_color, &self.rules_tau_color);
        set(&mut r.gamma_shape_rules, &self.rules_gamma_shape_rules);
        set(&mut r.gamma_lightning_color, &self.rules_gamma_lightning_color);
        set(&mut r.foreign_min_area_frac, &self.rules_foreign_min_area_frac);
        set(&mut r.foreign_max_background_similarity, &self.rules_foreign_max_background_similarity);
    }
}
