use std::path::Path;
use std::process::{Command, Output};

fn run(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_scaled-nn")).args(args).arg("--out").arg(out).env_remove("SCALED_NN_THREADS").output().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn selftest_passes() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["selftest"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(String::from_utf8_lossy(&o.stdout).contains("PASS"));
    assert!(dir.path().join("manifest").exists());
}

#[test]
fn out_of_range_gamma_is_a_domain_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["train", "--set", "gamma2=1.2"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("gamma2 out of range (1/2,1]"), "{}", stderr(&o));
}

#[test]
fn usage_and_io_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["train", "--bogus"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("Usage"));
    assert_eq!(run(&["train", "--set", "nokey=1"], dir.path()).status.code(), Some(2));
    assert_eq!(run(&["train", "--config", "/nonexistent/c.cfg"], dir.path()).status.code(), Some(2));
    let o = run(&["mnist", "--set", "mnist_dir=/nonexistent"], dir.path());
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
}

#[test]
fn train_writes_trajectory_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["train", "--set", "n2=64", "--set", "horizon=0.5", "--seed", "7"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let traj = std::fs::read_to_string(dir.path().join("trajectory.csv")).unwrap();
    assert!(traj.starts_with("t,h_1,h_2,h_3,max_abs_C"));
    let manifest = std::fs::read_to_string(dir.path().join("manifest")).unwrap();
    assert!(manifest.contains("command=train\n"));
    assert!(manifest.contains("seed=7\n"));
    assert!(manifest.contains("override=n2=64\n"));
    assert!(manifest.contains("config_sha256="));
    assert!(manifest.contains("\nhorizon=0.5\n"));
}

#[test]
fn reruns_are_bit_identical_and_config_files_work() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.cfg");
    std::fs::write(&cfg, "# small run\nn2 = 32\nhorizon = 0.25\n").unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for d in [&a, &b] {
        let o = run(&["train", "--config", cfg.to_str().unwrap()], d);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    }
    let read = |d: &Path, f: &str| std::fs::read(d.join(f)).unwrap();
    assert_eq!(read(&a, "trajectory.csv"), read(&b, "trajectory.csv"));
    assert_eq!(read(&a, "manifest"), read(&b, "manifest"));
}

#[test]
fn expand_writes_terms_and_reconstruction() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["expand", "--set", "gamma2=0.8", "--set", "n1=3", "--set", "dt=0.01"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let e = std::fs::read_to_string(dir.path().join("expansion.csv")).unwrap();
    assert!(e.starts_with("t,order,component_index,value\n"));
    assert!(dir.path().join("reconstruction.csv").exists());
    assert!(dir.path().join("manifest").exists());
}

#[test]
fn limit_writes_kernels() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["limit", "--set", "gamma2=0.6", "--set", "n1=3", "--set", "dt=0.01"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    for f in ["h.csv", "k.csv", "a.csv", "b1.csv", "b2.csv", "b3.csv"] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
}

#[test]
fn ensemble_writes_scaling_rows() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["ensemble", "--threads", "2", "--set", "n1=3", "--set", "seeds=4", "--set", "n2_grid=16,64,256", "--set", "dt=0.01"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let s = std::fs::read_to_string(dir.path().join("scaling.csv")).unwrap();
    assert!(s.starts_with("n2,gamma2,t,mean,var,se\n16,0.8,0,"));
    let f = std::fs::read_to_string(dir.path().join("fit.csv")).unwrap();
    assert!(f.lines().nth(1).unwrap().starts_with("sup_deviation,"));
}

#[test]
fn mnist_sweep_on_a_tiny_idx_set() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("mnist");
    std::fs::create_dir(&data).unwrap();
    let n = 20u32;
    let mut img = Vec::new();
    for w in [2051u32, n, 28, 28] {
        img.extend(w.to_be_bytes());
    }
    img.extend((0..n * 784).map(|i| (i * 7 % 256) as u8));
    let mut lab = Vec::new();
    for w in [2049u32, n] {
        lab.extend(w.to_be_bytes());
    }
    lab.extend((0..n).map(|i| (i % 10) as u8));
    for (name, bytes) in
        [("train-images-idx3-ubyte", &img), ("t10k-images-idx3-ubyte", &img), ("train-labels-idx1-ubyte", &lab), ("t10k-labels-idx1-ubyte", &lab)]
    {
        std::fs::write(data.join(name), bytes).unwrap();
    }
    let o = run(
        &[
            "mnist",
            "--set",
            &format!("mnist_dir={}", data.display()),
            "--set",
            "train_subset=10",
            "--set",
            "test_subset=10",
            "--set",
            "mnist_width=4",
            "--set",
            "epochs=1",
            "--set",
            "mnist_seeds=1",
            "--set",
            "gamma2_grid=0.5,1",
            "--set",
            "gamma1_grid=1",
        ],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let acc = std::fs::read_to_string(dir.path().join("accuracy.csv")).unwrap();
    let lines: Vec<&str> = acc.lines().collect();
    assert_eq!(lines[0], "epoch,gamma1,gamma2,train_acc,test_acc");
    assert_eq!(lines.len(), 3);
}
