use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use gffperc_core::graph::DENSE_THRESHOLD;
use serde::{Deserialize, Serialize};

#[derive(Parser, Debug)]
#[command(name = "gffperc", version, about = "Level-set percolation of Gaussian free fields on regular graphs and trees")]
pub struct Cli {
    /// Worker threads; results do not depend on this.
    #[arg(long, global = true, env = "GFFPERC_THREADS")]
    pub threads: Option<usize>,
    /// Emit the JSON envelope (default).
    #[arg(long, global = true, conflicts_with = "csv")]
    pub json: bool,
    /// Emit CSV with a leading `#manifest=` line.
    #[arg(long, global = true)]
    pub csv: bool,
    /// Output file; also writes `<out>.manifest.json` and `<out>.timing.json`.
    #[arg(long, short, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: TopCommand,
}

#[derive(Subcommand, Debug)]
pub enum TopCommand {
    #[command(flatten)]
    Run(Command),
    /// Re-run a command from its manifest and compare the manifest hash.
    Replay {
        #[arg(long)]
        manifest: PathBuf,
    },
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq, Eq, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Csv,
}

#[derive(Subcommand, Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    /// Random regular graphs and the assumption audit.
    #[command(subcommand)]
    Graph(GraphCmd),
    /// The free field on the regular tree.
    #[command(subcommand)]
    Tree(TreeCmd),
    /// The zero-average free field on a graph.
    #[command(subcommand)]
    Zagff(ZagffCmd),
    /// Level-set components.
    #[command(subcommand)]
    Perc(PercCmd),
    /// The two-queue exploration.
    #[command(subcommand)]
    Explore(ExploreCmd),
    /// Local couplings between graph and tree fields.
    #[command(subcommand)]
    Couple(CoupleCmd),
    /// Tree estimators of h⋆, λ_h and η⁺(h).
    #[command(subcommand)]
    Estimate(EstimateCmd),
    /// Ladder experiments across graph sizes.
    #[command(subcommand)]
    Experiment(ExperimentCmd),
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq, Eq, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum NamedGraph {
    K4,
    Petersen,
}

#[derive(Args, Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct GraphArgs {
    /// Graph file (adjacency-list text).
    #[arg(long, conflicts_with_all = ["named", "n"])]
    pub graph: Option<PathBuf>,
    /// A named small graph.
    #[arg(long, value_enum, conflicts_with = "n")]
    pub named: Option<NamedGraph>,
    /// Generate a random d-regular graph on this many vertices.
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long, default_value_t = 3)]
    pub d: usize,
    #[arg(long, default_value_t = 1)]
    pub graph_seed: u64,
    /// Draw graphs from the derived seed sequence until one passes the audit.
    #[arg(long)]
    pub audited: bool,
    #[arg(long, default_value_t = 0.2)]
    pub alpha: f64,
    #[arg(long, default_value_t = 0.05)]
    pub beta: f64,
    #[arg(long, default_value_t = DENSE_THRESHOLD)]
    pub dense_threshold: usize,
}

#[derive(Subcommand, Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(rename_all = "kebab-case")]
pub enum GraphCmd {
    /// Build a graph and optionally save it.
    Generate {
        #[command(flatten)]
        graph: GraphArgs,
        #[arg(long)]
        save: Option<PathBuf>,
    },
    /// Check assumptions (0)–(2) and report the derived scale constants.
    Audit {
        #[command(flatten)]
        graph: GraphArgs,
    },
}

#[derive(Subcommand, Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(rename_all = "kebab-case")]
pub enum TreeCmd {
    /// Forward clusters of independent keyed realisations.
    Cluster {
        #[arg(long, default_value_t = 3)]
        d: usize,
        #[arg(long)]
        h: f64,
        #[arg(long, default_value_t = 20)]
        depth: usize,
        #[arg(long, default_value_t = 100)]
        replicas: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
    /// Variance of the sphere-hitting average at every vertex of a ball.
    BoundaryVariance {
        #[arg(long, default_value_t = 3)]
        d: usize,
        #[arg(long)]
        big_r: usize,
    },
}

#[derive(Subcommand, Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(rename_all = "kebab-case")]
pub enum ZagffCmd {
    /// Column G(x, ·) of the zero-average Green function.
    Green {
        #[command(flatten)]
        graph: GraphArgs,
        #[arg(long, default_value_t = 0)]
        x: usize,
    },
    /// Exact field samples.
    Sample {
        #[command(flatten)]
        graph: GraphArgs,
        #[arg(long, default_value_t = 1)]
        replicas: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
    /// Conditional mean and variance of Ψ(x) given Ψ on a set.
    Conditional {
        #[command(flatten)]
        graph: GraphArgs,
        #[arg(long, value_delimiter = ',', required = true)]
        set: Vec<usize>,
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true, required = true)]
        observed: Vec<f64>,
        #[arg(long)]
        x: usize,
    },
}

#[derive(Args, Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct FieldArgs {
    /// Field file: one value per line, in vertex order.
    #[arg(long)]
    pub field: Option<PathBuf>,
    /// Otherwise sample replica `replica` of stream `seed`.
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, default_value_t = 0)]
    pub replica: u64,
}

#[derive(Subcommand, Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(rename_all = "kebab-case")]
pub enum PercCmd {
    /// Components of {Ψ ≥ h}.
    Components {
        #[command(flatten)]
        graph: GraphArgs,
        #[command(flatten)]
        field: FieldArgs,
        #[arg(long, allow_negative_numbers = true)]
        h: f64,
    },
    /// Counts of vertices in components (and forward spheres) of size ≥ N^γ.
    Census {
        #[command(flatten)]
        graph: GraphArgs,
        #[command(flatten)]
        field: FieldArgs,
        #[arg(long, allow_negative_numbers = true)]
        h: f64,
        #[arg(long)]
        gamma: f64,
    },
}

#[derive(Args, Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct ExploreArgs {
    /// Radius of the good-vertex test.
    #[arg(long, default_value_t = 2)]
    pub s: usize,
    /// K: stop once |C| ≥ K·ln N.
    #[arg(long, default_value_t = 20.0)]
    pub k_cap: f64,
    /// c_κ: anomaly threshold c_κ·√(ln N).
    #[arg(long, default_value_t = 3.0)]
    pub c_kappa: f64,
}

#[derive(Subcommand, Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(rename_all = "kebab-case")]
pub enum ExploreCmd {
    /// Run the exploration from x.
    Run {
        #[command(flatten)]
        graph: GraphArgs,
        #[command(flatten)]
        explore: ExploreArgs,
        #[arg(long, default_value_t = 0)]
        x: usize,
        #[arg(long, allow_negative_numbers = true)]
        h: f64,
        #[arg(long, default_value_t = 1)]
        replicas: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Include the full event trace of every replica.
        #[arg(long)]
        traces: bool,
    },
    /// Frequency with which subtree clusters are dominated by coupled tree clusters.
    Dominate {
        #[command(flatten)]
        graph: GraphArgs,
        #[command(flatten)]
        explore: ExploreArgs,
        #[arg(long, default_value_t = 0)]
        x: usize,
        #[arg(long, allow_negative_numbers = true)]
        h: f64,
        #[arg(long, default_value_t = 0.1)]
        epsilon: f64,
        #[arg(long, default_value_t = 25)]
        depth: usize,
        #[arg(long, default_value_t = 1000)]
        replicas: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Fail (exit 2) when the frequency is below this value.
        #[arg(long)]
        min_frequency: Option<f64>,
    },
}

#[derive(Subcommand, Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(rename_all = "kebab-case")]
pub enum CoupleCmd {
    /// Empirical tail of sup |Ψ − φ∘ρ| over B(x, r).
    Tail {
        #[command(flatten)]
        graph: GraphArgs,
        /// Centre; defaults to the first vertex with tx(B(x, 2R)) = 0.
        #[arg(long)]
        x: Option<usize>,
        #[arg(long)]
        x_prime: Option<usize>,
        #[arg(long, default_value_t = 1)]
        r: usize,
        #[arg(long)]
        big_r: usize,
        #[arg(long, value_delimiter = ',', default_value = "0.1,0.2,0.5,1.0")]
        eps: Vec<f64>,
        #[arg(long, default_value_t = 1000)]
        replicas: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
    /// Variance of the sphere-hitting average on a tree-like graph ball.
    BoundaryVariance {
        #[command(flatten)]
        graph: GraphArgs,
        #[arg(long)]
        x: Option<usize>,
        #[arg(long)]
        big_r: usize,
    },
    /// Killed-walk ruin probability at a good vertex against the closed form.
    Ruin {
        #[command(flatten)]
        graph: GraphArgs,
        /// The explored set A; defaults to the first vertex with a tree-like (s+2)-ball.
        #[arg(long, value_delimiter = ',')]
        set: Vec<usize>,
        /// Boundary vertex; defaults to the first neighbour of A outside A.
        #[arg(long)]
        x: Option<usize>,
        #[arg(long, default_value_t = 1)]
        s: usize,
    },
    /// Distance of conditional laws at good vertices from the tree limit.
    Proximity {
        #[command(flatten)]
        graph: GraphArgs,
        #[arg(long, default_value_t = 2)]
        s: usize,
        #[arg(long, default_value_t = 100)]
        samples: usize,
        #[arg(long, default_value_t = 3.0)]
        b_prime: f64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
}

#[derive(Args, Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct TreeMc {
    #[arg(long, default_value_t = 3)]
    pub d: usize,
    #[arg(long, default_value_t = 25)]
    pub depth: usize,
    #[arg(long, default_value_t = 10_000)]
    pub replicas: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
}

#[derive(Subcommand, Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(rename_all = "kebab-case")]
pub enum EstimateCmd {
    /// Survival frequency η̂⁺(h) at each level.
    Eta {
        #[command(flatten)]
        mc: TreeMc,
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true, required = true)]
        h: Vec<f64>,
    },
    /// Growth rate λ̂_h at each level.
    Lambda {
        #[command(flatten)]
        mc: TreeMc,
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true, required = true)]
        h: Vec<f64>,
    },
    /// Level ĥ⋆ where λ̂ crosses 1, with a bootstrap interval.
    HStar {
        #[command(flatten)]
        mc: TreeMc,
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true, default_value = "0,0.5,1,1.5,2")]
        h_grid: Vec<f64>,
        #[arg(long, default_value_t = 8)]
        bisection_steps: usize,
    },
    /// Nested Monte Carlo check of the exponential-moment fixed point.
    ExpMoment {
        #[arg(long, default_value_t = 3)]
        d: usize,
        #[arg(long, allow_negative_numbers = true)]
        h: f64,
        #[arg(long, value_delimiter = ',', default_value = "0,0.05,0.1,0.2")]
        deltas: Vec<f64>,
        /// Root values a ≥ h; defaults to h, h + 1.
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
        a_grid: Vec<f64>,
        #[arg(long, default_value_t = 25)]
        depth: usize,
        #[arg(long, default_value_t = 2000)]
        outer: usize,
        #[arg(long, default_value_t = 200)]
        inner: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
    /// Frequency of |C ∩ S⁺(o,k)| ≥ λ̂^k/k² against η̂⁺(h).
    SphereGrowth {
        #[command(flatten)]
        mc: TreeMc,
        #[arg(long, allow_negative_numbers = true)]
        h: f64,
    },
}

#[derive(Args, Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct LadderArgs {
    #[arg(long, default_value_t = 3)]
    pub d: usize,
    #[arg(long, value_delimiter = ',', default_value = "1024,2048,4096,8192")]
    pub sizes: Vec<usize>,
    #[arg(long, default_value_t = 100)]
    pub replicas: usize,
    #[arg(long, default_value_t = 0.2)]
    pub alpha: f64,
    #[arg(long, default_value_t = 0.05)]
    pub beta: f64,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, default_value_t = 1024)]
    pub dense_threshold: usize,
    #[arg(long, default_value_t = 20)]
    pub graph_attempts: usize,
}

#[derive(Args, Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct LevelArgs {
    /// Level; if absent, ĥ⋆ is estimated on the tree and `offset` added.
    #[arg(long, allow_negative_numbers = true)]
    pub h: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub offset: Option<f64>,
    #[arg(long, default_value_t = 25)]
    pub tree_depth: usize,
    #[arg(long, default_value_t = 10_000)]
    pub tree_replicas: usize,
}

#[derive(Subcommand, Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentCmd {
    /// Largest component at h > ĥ⋆ against K·ln N, with a contrast run below ĥ⋆.
    Subcritical {
        #[command(flatten)]
        ladder: LadderArgs,
        #[command(flatten)]
        level: LevelArgs,
        #[arg(long, default_value_t = 20.0)]
        k_cap: f64,
        /// Offset from ĥ⋆ of the contrast level (needs ĥ⋆, so `h` must be absent).
        #[arg(long, allow_negative_numbers = true)]
        contrast_offset: Option<f64>,
    },
    /// Mesoscopic census at h < ĥ⋆.
    Supercritical {
        #[command(flatten)]
        ladder: LadderArgs,
        #[command(flatten)]
        level: LevelArgs,
        /// γ uses λ̂ at h + delta.
        #[arg(long, default_value_t = 0.1)]
        delta: f64,
    },
}
