use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::OnceLock;

use uipc::checkpoint;
use uipc::commands::{self, Context};
use uipc::io::read_prepared;
use uipc_core::train::{train, Silent};

fn uipc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_uipc")).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = uipc(args);
    assert!(
        out.status.success(),
        "uipc {} failed: {}",
        args.join(" "),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

const SMALL: &str = r##""Embedding size" = 8
"# User prototypes" = 4
"# Item prototypes" = 6
"Neg. samples" = 5
"Batch size" = 64
"LR" = 0.01
"Max epochs" = 4
"λ_L1" = 1e-3
"##;

/// A small planted dataset and a trained UIPC-MF-L1 checkpoint, shared by
/// the tests below.
struct Fixture {
    _root: tempfile::TempDir,
    data: PathBuf,
    config: PathBuf,
    model_dir: PathBuf,
}

impl Fixture {
    fn ckpt(&self) -> PathBuf {
        self.model_dir.join("checkpoint")
    }
}

fn fixture() -> &'static Fixture {
    static F: OnceLock<Fixture> = OnceLock::new();
    F.get_or_init(|| {
        let root = tempfile::tempdir().unwrap();
        let data = root.path().join("data");
        ok(&["synth", "--quiet", "--seed", "3", "--out-dir", s(&data), "--groups", "3", "--users-per-group", "40", "--items-per-group", "50"]);
        let config = root.path().join("small.toml");
        fs::write(&config, SMALL).unwrap();
        let model_dir = root.path().join("model");
        ok(&["train", "--quiet", "--seed", "3", "--out-dir", s(&model_dir), "--data", s(&data), "--model", "uipc-mf-l1", "--config", s(&config), "--log-steps"]);
        Fixture {
            _root: root,
            data,
            config,
            model_dir,
        }
    })
}

#[test]
fn prepare_missing_input_names_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let out = uipc(&["prepare", "--input", "/no/such/ratings.tsv", "--out-dir", s(dir.path())]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("/no/such/ratings.tsv"));
}

#[test]
fn prepare_is_reproducible_and_thresholds() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("raw.tsv");
    let mut body = String::from("user\titem\trating\ttimestamp\n");
    let mut rows = 0;
    for u in 0..60 {
        for j in 0..15 {
            let t = (u * 7 + j * 17) % 200;
            let rating = if (u + j) % 5 == 0 { 2 } else { 4 };
            body.push_str(&format!("u{u}\ti{t}\t{rating}\t{}\n", 1000 + u * 20 + j));
            rows += 1;
        }
    }
    fs::write(&input, body).unwrap();
    let mut hashes = Vec::new();
    for run in ["a", "b"] {
        let out = dir.path().join(run);
        ok(&["prepare", "--quiet", "--input", s(&input), "--user-core", "3", "--item-core", "2", "--threshold", "3.5", "--seed", "7", "--out-dir", s(&out)]);
        let files: Vec<Vec<u8>> = uipc::io::SPLIT_FILES.iter().map(|f| fs::read(out.join(f)).unwrap()).collect();
        hashes.push(files);
        let manifest: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(out.join("prepare.manifest.json")).unwrap()).unwrap();
        assert_eq!(manifest["seed"], 7);
        assert_eq!(manifest["config"]["args"]["threshold"], 3.5);
        assert_eq!(manifest["inputs"].as_object().unwrap().len(), 1);
    }
    assert_eq!(hashes[0], hashes[1]);
    let data = read_prepared(&dir.path().join("a")).unwrap();
    let kept = data.splits.train.len() + data.splits.validation.len() + data.splits.test.len();
    // Rows rated 2 are dropped by the threshold.
    assert!(kept <= rows * 4 / 5, "{kept} of {rows}");
    let negatives = fs::read_to_string(dir.path().join("a/negatives.tsv")).unwrap();
    for line in negatives.lines() {
        assert_eq!(line.split('\t').nth(2).unwrap().split(' ').count(), 99);
    }
}

#[test]
fn train_writes_checkpoint_log_and_manifest() {
    let f = fixture();
    let manifest = checkpoint::read_manifest(&f.ckpt()).unwrap();
    assert_eq!(manifest.label, "uipc-mf-l1");
    assert_eq!(manifest.config.reg.l1_pref, 1e-3);
    assert_eq!(manifest.config.seed, 3);
    let log = fs::read_to_string(f.model_dir.join("trainlog.csv")).unwrap();
    assert_eq!(log.lines().count(), 1 + 4);
    assert!(log.lines().next().unwrap().starts_with("epoch,base,l2,"));
    assert!(fs::read_to_string(f.model_dir.join("steps.csv")).unwrap().lines().count() > 4);
    let run: uipc::manifest::RunManifest =
        serde_json::from_str(&fs::read_to_string(f.model_dir.join("train.manifest.json")).unwrap()).unwrap();
    assert_eq!(run.subcommand, "train");
    assert_eq!(run.config["train"]["n_item_prototypes"], 6);
    assert!(run.inputs.keys().any(|k| k.ends_with("idmap.tsv")));
}

#[test]
fn uipc_mf_forces_zero_l1() {
    let f = fixture();
    let dir = tempfile::tempdir().unwrap();
    ok(&["train", "--quiet", "--out-dir", s(dir.path()), "--data", s(&f.data), "--model", "uipc-mf", "--config", s(&f.config)]);
    let manifest = checkpoint::read_manifest(&dir.path().join("checkpoint")).unwrap();
    assert_eq!(manifest.config.reg.l1_pref, 0.0);
}

#[test]
fn mf_trains_under_the_same_harness() {
    let f = fixture();
    let dir = tempfile::tempdir().unwrap();
    ok(&["train", "--quiet", "--out-dir", s(dir.path()), "--data", s(&f.data), "--model", "mf", "--config", s(&f.config)]);
    let (model, _) = checkpoint::load(&dir.path().join("checkpoint")).unwrap();
    assert_eq!(model.kind(), uipc_core::ModelKind::Mf);
}

#[test]
fn unknown_model_lists_valid_kinds() {
    let f = fixture();
    let out = uipc(&["train", "--data", s(&f.data), "--model", "svd"]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    for kind in ["mf", "acf", "protomf", "uipc-mf", "uipc-mf-l1"] {
        assert!(err.contains(kind), "{err}");
    }
}

#[test]
fn evaluate_reports_four_values_and_matches_training() {
    let f = fixture();
    let dir = tempfile::tempdir().unwrap();
    let stdout = ok(&["evaluate", "--out-dir", s(dir.path()), "--model", s(&f.ckpt()), "--data", s(&f.data), "--stage", "test", "--k", "5,10"]);
    assert_eq!(stdout.lines().count(), 3);
    let csv = fs::read_to_string(dir.path().join("metrics_test.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().collect();
    assert_eq!(rows[0], "model,seed,stage,k,hr,ndcg");
    assert_eq!(rows.len(), 3);
    assert!(rows[1].starts_with("uipc-mf-l1,3,test,5,"));

    ok(&["evaluate", "--quiet", "--out-dir", s(dir.path()), "--model", s(&f.ckpt()), "--data", s(&f.data), "--stage", "validation", "--k", "10"]);
    let csv = fs::read_to_string(dir.path().join("metrics_validation.csv")).unwrap();
    let hr: f64 = csv.lines().nth(1).unwrap().split(',').nth(4).unwrap().parse().unwrap();
    let manifest = checkpoint::read_manifest(&f.ckpt()).unwrap();
    assert_eq!(hr.to_bits(), manifest.best_validation_hr.to_bits());
}

#[test]
fn evaluate_rejects_a_different_dataset() {
    let f = fixture();
    let dir = tempfile::tempdir().unwrap();
    let other = dir.path().join("other");
    ok(&["synth", "--quiet", "--seed", "4", "--out-dir", s(&other), "--groups", "3", "--users-per-group", "40", "--items-per-group", "50"]);
    let out = uipc(&["evaluate", "--out-dir", s(dir.path()), "--model", s(&f.ckpt()), "--data", s(&other)]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("fingerprint"));
}

#[test]
fn explain_outputs() {
    let f = fixture();
    let dir = tempfile::tempdir().unwrap();
    let data = read_prepared(&f.data).unwrap();
    let case = &data.splits.test[0];
    let user = &data.user_keys[case.user];
    let item = &data.item_keys[case.item];
    ok(&["explain", "--quiet", "--out-dir", s(dir.path()), "--model", s(&f.ckpt()), "--data", s(&f.data), "--user", user, "--item", item, "--top", "5"]);
    let doc: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("explain.json")).unwrap()).unwrap();
    assert_eq!(doc["top_prototypes"].as_array().unwrap().len(), 5);
    assert_eq!(doc["user"], user.as_str());
    let parts: f64 = doc["breakdown"]["prototype_scores"].as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).sum();
    assert!((parts - doc["score"].as_f64().unwrap()).abs() < 1e-9);
    assert!(doc["rationale"].as_str().unwrap().contains(user.as_str()));

    ok(&["explain", "--quiet", "--out-dir", s(dir.path()), "--model", s(&f.ckpt()), "--data", s(&f.data), "--prototype", "2", "--top", "10"]);
    let csv = fs::read_to_string(dir.path().join("prototypes.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 10);
    assert!(csv.lines().nth(1).unwrap().starts_with("2,1,"));

    ok(&["explain", "--quiet", "--out-dir", s(dir.path()), "--model", s(&f.ckpt()), "--data", s(&f.data), "--pref-dist"]);
    let csv = fs::read_to_string(dir.path().join("pref_dist.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 6);
    assert_eq!(csv.lines().next().unwrap(), "prototype,min,q1,median,q3,max,all_same_sign");
}

#[test]
fn explain_uses_metadata_and_rejects_unknown_keys() {
    let f = fixture();
    let dir = tempfile::tempdir().unwrap();
    let data = read_prepared(&f.data).unwrap();
    let meta = dir.path().join("items.dat");
    let body: String = data.item_keys.iter().map(|k| format!("{k}::Title {k}::Genre\n")).collect();
    fs::write(&meta, body).unwrap();
    ok(&["explain", "--quiet", "--out-dir", s(dir.path()), "--model", s(&f.ckpt()), "--data", s(&f.data), "--prototype", "0", "--top", "3", "--metadata", s(&meta)]);
    let csv = fs::read_to_string(dir.path().join("prototypes.csv")).unwrap();
    assert!(csv.lines().nth(1).unwrap().ends_with("/ Genre"), "{csv}");

    let out = uipc(&["explain", "--out-dir", s(dir.path()), "--model", s(&f.ckpt()), "--data", s(&f.data), "--user", "nobody", "--item", &data.item_keys[0]]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("nobody"));
}

#[test]
fn search_ranks_trials_and_best_config_reproduces() {
    let f = fixture();
    let dir = tempfile::tempdir().unwrap();
    let space = dir.path().join("space.toml");
    fs::write(
        &space,
        format!(
            "[base]\n{SMALL}\n[space.\"LR\"]\nkind = \"log-uniform\"\nlow = 1e-3\nhigh = 3e-2\n\n[space.\"Neg. samples\"]\nkind = \"int-uniform\"\nlow = 2\nhigh = 8\n"
        ),
    )
    .unwrap();
    let mut tables = Vec::new();
    for parallel in ["1", "3"] {
        let out = dir.path().join(format!("p{parallel}"));
        ok(&["search", "--quiet", "--seed", "3", "--out-dir", s(&out), "--data", s(&f.data), "--model", "uipc-mf-l1", "--space", s(&space), "--trials", "4", "--parallel", parallel]);
        tables.push(fs::read_to_string(out.join("trials.csv")).unwrap());
    }
    assert_eq!(tables[0], tables[1]);
    let rows: Vec<&str> = tables[0].lines().collect();
    assert_eq!(rows.len(), 1 + 4);
    assert!(rows[0].starts_with("rank,trial,seed,validation_hr10"));

    let best: Vec<&str> = rows[1].split(',').collect();
    let seed: u64 = best[2].parse().unwrap();
    let hr: f64 = best[3].parse().unwrap();
    let ctx = Context {
        seed,
        out_dir: dir.path().to_path_buf(),
        quiet: true,
    };
    let config = commands::resolve_train_config(&ctx, uipc::ModelName::UipcMfL1, Some(&dir.path().join("p1/best.toml"))).unwrap();
    let data = read_prepared(&f.data).unwrap();
    let out = train(&data.splits, uipc_core::ModelKind::UipcMf, &config, &mut Silent).unwrap();
    assert_eq!(out.log.best_validation_hr.to_bits(), hr.to_bits());
}

#[test]
fn search_needs_at_least_one_trial() {
    let f = fixture();
    let out = uipc(&["search", "--data", s(&f.data), "--model", "mf", "--space", "space.toml", "--trials", "0"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn synth_labels_follow_the_idmap() {
    let f = fixture();
    let data = read_prepared(&f.data).unwrap();
    let labels = fs::read_to_string(f.data.join("labels.tsv")).unwrap();
    let rows: Vec<Vec<&str>> = labels.lines().map(|l| l.split('\t').collect()).collect();
    assert_eq!(rows.len(), data.user_keys.len() + data.item_keys.len());
    for r in &rows {
        let index: usize = r[1].parse().unwrap();
        let group: usize = r[2].parse().unwrap();
        let key = if r[0] == "user" { &data.user_keys[index] } else { &data.item_keys[index] };
        let n: usize = key[1..].parse().unwrap();
        let per_group = if r[0] == "user" { 40 } else { 50 };
        assert_eq!(group, n / per_group);
    }
    assert!(f.data.join("interactions.tsv").is_file());
}

#[test]
fn shipped_configs_parse() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("configs");
    let best = uipc::config::load_train_config(&dir.join("ml1m_best1.toml"), Default::default()).unwrap();
    assert_eq!((best.dim, best.n_neg, best.batch_size), (33, 37, 124));
    assert_eq!((best.n_user_prototypes, best.n_item_prototypes), (84, 95));
    assert_eq!(best.learning_rate, 0.0226839);
    assert_eq!(best.reg.l1_pref, 0.00318446);
    assert_eq!(best.reg.item_to_proto, 1.322822);
    assert_eq!(best.optimizer, uipc_core::optim::OptimizerKind::Adagrad);
    uipc::config::load_train_config(&dir.join("planted.toml"), Default::default()).unwrap();
    let space = uipc::config::load_search_space(&dir.join("search_space.toml"), Default::default()).unwrap();
    assert_eq!(space.ranges.len(), 4);
}
