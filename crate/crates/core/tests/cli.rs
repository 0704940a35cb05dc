use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn qnav(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qnav")).args(args).output().expect("binary runs")
}

fn ok(out: &Output) -> String {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn write_config(dir: &Path) -> String {
    let path = dir.join("fast.toml");
    fs::write(
        &path,
        "[agent]\nlayer_dims = [26, 12, 5]\nlearning_starts = 16\nbatch_size = 8\n\n[env]\nmax_steps = 40\n",
    )
    .unwrap();
    path.to_str().unwrap().to_owned()
}

#[test]
fn train_eval_report_round_trip() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path());
    let mut eval_dirs = Vec::new();
    for algo in ["dqn", "ddqn"] {
        let run = tmp.path().join(algo);
        let run_s = run.to_str().unwrap();
        let out = ok(&qnav(&[
            "train", "--scenario", "3", "--algo", algo, "--episodes", "3", "--seed", "4", "--out", run_s, "--config", &cfg,
        ]));
        assert!(out.contains("trained 3 episodes"));
        let eval = tmp.path().join(format!("eval-{algo}"));
        let ck = run.join("final.qnav");
        let out = ok(&qnav(&[
            "eval",
            "--checkpoint",
            ck.to_str().unwrap(),
            "--scenario",
            "3",
            "--trials-per-goal",
            "2",
            "--seed",
            "1",
            "--out",
            eval.to_str().unwrap(),
        ]));
        assert!(out.contains(&algo.to_uppercase()));
        eval_dirs.push(eval);
    }
    let dirs: Vec<&str> = eval_dirs.iter().map(|d| d.to_str().unwrap()).collect();
    let mut args = vec!["report", "--format", "csv", "--in"];
    args.extend(&dirs);
    let csv = ok(&qnav(&args));
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("env,algorithm,et_mean_s,et_std_s,sr_percent"));
    let algos: Vec<&str> = lines.map(|l| l.split(',').nth(1).unwrap()).collect();
    assert_eq!(algos, vec!["DQN", "DDQN"]);

    let mut args = vec!["report", "--in"];
    args.extend(&dirs);
    let text = ok(&qnav(&args));
    assert!(text.starts_with("Env"));
    assert_eq!(text.lines().count(), 4);
}

#[test]
fn identical_cli_runs_write_identical_logs() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path());
    let logs: Vec<Vec<u8>> = ["a", "b"]
        .iter()
        .map(|name| {
            let dir = tmp.path().join(name);
            ok(&qnav(&[
                "train", "--scenario", "1", "--algo", "ddqn", "--episodes", "4", "--seed", "12", "--out",
                dir.to_str().unwrap(), "--config", &cfg,
            ]));
            fs::read(dir.join("episodes.csv")).unwrap()
        })
        .collect();
    assert_eq!(logs[0], logs[1]);
}

#[test]
fn invalid_arguments_fail_cleanly() {
    let tmp = tempfile::tempdir().unwrap();
    let out_dir = tmp.path().join("x");
    let out_s = out_dir.to_str().unwrap();
    let bad_scenario = qnav(&["train", "--scenario", "4", "--algo", "dqn", "--episodes", "1", "--seed", "0", "--out", out_s]);
    assert!(!bad_scenario.status.success());

    let zero = qnav(&["train", "--scenario", "1", "--algo", "dqn", "--episodes", "0", "--seed", "0", "--out", out_s]);
    assert!(!zero.status.success());
    assert!(String::from_utf8_lossy(&zero.stderr).contains("episodes"));

    let conflict = tmp.path().join("conflict.toml");
    fs::write(&conflict, "[agent]\nalgo = \"ddqn\"\n").unwrap();
    let out = qnav(&[
        "train", "--scenario", "1", "--algo", "dqn", "--episodes", "1", "--seed", "0", "--out", out_s, "--config",
        conflict.to_str().unwrap(),
    ]);
    assert!(!out.status.success());

    let missing = qnav(&["eval", "--checkpoint", "/nonexistent.qnav", "--scenario", "1", "--trials-per-goal", "1", "--seed", "0", "--out", out_s]);
    assert!(!missing.status.success());
    assert!(String::from_utf8_lossy(&missing.stderr).starts_with("error:"));
}

#[test]
fn world_subcommand_prints_a_loadable_file() {
    let text = ok(&qnav(&["world", "--scenario", "3"]));
    let world = qnav::load_world(&text).unwrap();
    assert_eq!(world, qnav::builtin_scenario(3).unwrap());
}
