mod common;

use std::path::Path;
use std::process::Command;

use common::cantor_counts;

const CANTOR: &str = "kind = \"ifs\"\nmaps = [{ ratio = \"1/3\", offset = [\"0\"] }, { ratio = \"1/3\", offset = [\"2/3\"] }]\n";
const DIGIT: &str = "kind = \"digits\"\nbase = 4\npattern = [[0, 3]]\n";
const FULL: &str = "kind = \"digits\"\nbase = 2\npattern = [[0, 1]]\n";

struct Run {
    code: i32,
    out: String,
    err: String,
}

impl Run {
    fn field(&self, key: &str) -> String {
        field(&self.out, key)
    }

    fn num(&self, key: &str) -> f64 {
        self.field(key).parse().unwrap_or_else(|_| panic!("{key} is not a number in\n{}", self.out))
    }
}

fn field(text: &str, key: &str) -> String {
    let prefix = format!("{key} = ");
    text.lines()
        .find_map(|l| l.strip_prefix(&prefix))
        .unwrap_or_else(|| panic!("no field {key} in\n{text}"))
        .to_string()
}

fn run_env(args: &[&str], env: &[(&str, &str)]) -> Run {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_frostman"));
    cmd.args(args);
    for (k, v) in env {
        cmd.env(k, v);
    }
    let o = cmd.output().unwrap();
    Run {
        code: o.status.code().unwrap(),
        out: String::from_utf8(o.stdout).unwrap(),
        err: String::from_utf8(o.stderr).unwrap(),
    }
}

fn run(args: &[&str]) -> Run {
    run_env(args, &[])
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

/// Rows of a named table in text output.
fn table(text: &str, name: &str) -> Vec<Vec<String>> {
    let mut lines = text.lines().skip_while(|l| *l != format!("[{name}]")).skip(2);
    let mut rows = Vec::new();
    for l in lines.by_ref() {
        if l.is_empty() {
            break;
        }
        rows.push(l.split_whitespace().map(String::from).collect());
    }
    rows
}

#[test]
fn ingest_cantor_counts_match_enumeration() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write(dir.path(), "cantor.toml", CANTOR);
    let out = dir.path().join("out");
    let r = run(&["ingest", "--input", &spec, "--n-max", "16", "--output-dir", out.to_str().unwrap()]);
    assert_eq!(r.code, 0, "{}", r.err);
    let counts: Vec<u128> = table(&r.out, "levels").iter().map(|row| row[1].parse().unwrap()).collect();
    assert_eq!(counts, cantor_counts(16));
    assert!(out.join("tree.dyot").exists());
    assert_eq!(std::fs::read_to_string(out.join("counts.txt")).unwrap(), r.out);
}

#[test]
fn ingest_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let pts = write(dir.path(), "pts.txt", "0.1 0.2\n0.7 0.4\n# comment\n0.33 0.91\n");
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    let ra = run(&["ingest", "--input", &pts, "--n-max", "12", "--output-dir", a.to_str().unwrap()]);
    let rb = run(&["ingest", "--input", &pts, "--n-max", "12", "--output-dir", b.to_str().unwrap()]);
    assert_eq!((ra.code, rb.code), (0, 0));
    assert_eq!(ra.out, rb.out);
    assert_eq!(std::fs::read(a.join("tree.dyot")).unwrap(), std::fs::read(b.join("tree.dyot")).unwrap());
    let rc = run(&["ingest", "--input", &pts, "--n-max", "11", "--output-dir", b.to_str().unwrap()]);
    assert_ne!(rc.field("config_hash"), ra.field("config_hash"));
}

#[test]
fn input_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let empty = write(dir.path(), "empty.txt", "");
    let r = run(&["ingest", "--input", &empty, "--n-max", "12", "--output-dir", dir.path().to_str().unwrap()]);
    assert_eq!(r.code, 2);
    assert!(r.err.contains("empty point set"), "{}", r.err);
    let r = run(&["ingest", "--input", "/nonexistent/file", "--n-max", "4"]);
    assert_eq!(r.code, 2);
    let bad = write(dir.path(), "bad.toml", "kind = \"digits\"\nbase = 4\npattern = [[7]]\n");
    assert_eq!(run(&["ingest", "--input", &bad, "--n-max", "4", "--output-dir", dir.path().to_str().unwrap()]).code, 2);
    let spec = write(dir.path(), "c.toml", CANTOR);
    assert_eq!(run(&["ingest", "--input", &spec]).code, 2, "missing --n-max");
    assert_eq!(run(&["ingest", "--input", &spec, "--bogus"]).code, 2);
    let r = run_env(&["ingest", "--input", &spec, "--n-max", "4"], &[("FROSTMAN_THREADS", "many")]);
    assert_eq!(r.code, 2);
}

#[test]
fn estimate_all_on_full_interval() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write(dir.path(), "full.toml", FULL);
    let r = run(&["estimate", "--input", &spec, "--n-max", "16", "--all", "--output-dir", dir.path().to_str().unwrap()]);
    assert_eq!(r.code, 0, "{}", r.err);
    for key in ["dyadic", "lower", "box"] {
        assert_eq!(r.num(key), 1.0, "{key}");
    }
    for theta in ["0.25", "0.5", "0.75", "1"] {
        assert_eq!(r.field(&format!("intermediate[theta={theta}]")), "1");
    }
    assert!(r.field("chain").ends_with("holds"));
    for f in ["dyadic.txt", "box.txt", "lower.txt", "intermediate.txt", "summary.txt"] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
}

#[test]
fn estimate_dyadic_on_digit_set() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write(dir.path(), "digit.toml", DIGIT);
    let r = run(&["estimate", "--input", &spec, "--n-max", "16", "--dyadic", "--output-dir", dir.path().to_str().unwrap()]);
    assert_eq!(r.code, 0, "{}", r.err);
    assert_eq!(r.num("dyadic"), 0.0);
    let text = std::fs::read_to_string(dir.path().join("dyadic.txt")).unwrap();
    let trace: Vec<String> = table(&text, "trace").iter().map(|row| row[1].clone()).collect();
    assert_eq!(trace.len(), 16);
    for (n, v) in trace.iter().enumerate() {
        assert_eq!(v, if n % 2 == 0 { "1" } else { "0" }, "level {n}");
    }
}

#[test]
fn infeasible_scales_exit_with_three() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write(dir.path(), "seq.toml", "kind = \"sequence\"\np = 1\n");
    let d = dir.path().to_str().unwrap();
    let r = run(&["estimate", "--input", &spec, "--n-max", "12", "--intermediate", "--theta", "0.5", "--delta", "2^-10", "--output-dir", d]);
    assert_eq!(r.code, 3);
    assert!(r.err.contains("n_max >= 20"), "{}", r.err);
    let r = run(&["construct", "--input", &spec, "--n-max", "6", "--theta", "0.5", "--delta", "0.01", "--s", "1", "--t", "1", "--output-dir", d]);
    assert_eq!(r.code, 3);
    assert!(r.err.contains("n_max >= 13"), "{}", r.err);
    let r = run(&["construct", "--input", &spec, "--n-max", "8", "--theta", "0.5", "--delta", "0.25", "--s", "1", "--t", "0.5", "--output-dir", d]);
    assert_eq!(r.code, 3);
}

#[test]
fn construct_then_verify() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write(dir.path(), "full.toml", FULL);
    let out = dir.path().join("run");
    let o = out.to_str().unwrap();
    let r = run(&["construct", "--input", &spec, "--n-max", "12", "--theta", "0.5", "--delta", "0.25", "--s", "1", "--t", "1", "--output-dir", o]);
    assert_eq!(r.code, 0, "{}", r.err);
    assert_eq!(r.field("cover_cubes"), "4");
    assert_eq!(r.num("total"), 1.0);
    assert_eq!(r.field("monotonicity"), "holds");
    let cover = std::fs::read_to_string(out.join("cover.txt")).unwrap();
    let rows = table(&cover, "cover");
    assert_eq!(rows.len(), 4);
    assert!(rows.iter().all(|row| row[0] == "2" && row[5] == "0.25"));
    let hash = r.field("config_hash");
    for dump in ["measure.dump", "measure.dyom"] {
        let path = out.join(dump);
        let v = run(&["verify", "--input", path.to_str().unwrap(), "--output-dir", o]);
        assert_eq!(v.code, 0, "{}", v.err);
        assert_eq!(v.field("construct_hash"), hash);
        for key in ["fine_constant", "mid_constant"] {
            let c = v.num(key);
            assert!(c > 1.0 && c < 6.0, "{key} = {c}");
        }
        assert!(out.join("decay.txt").exists());
        let mismatch = run(&["verify", "--input", path.to_str().unwrap(), "--theta", "0.25", "--output-dir", o]);
        assert_eq!(mismatch.code, 2);
    }
    let a = run(&["verify", "--input", out.join("measure.dump").to_str().unwrap(), "--seed", "5", "--output-dir", o]);
    let b = run_env(&["verify", "--input", out.join("measure.dump").to_str().unwrap(), "--seed", "5", "--output-dir", o], &[("FROSTMAN_THREADS", "1")]);
    assert_eq!(a.out, b.out);
    // A different tree under the dump's file name fails the checksum.
    let other = write(dir.path(), "cantor.toml", CANTOR);
    let r = run(&["ingest", "--input", &other, "--n-max", "12", "--output-dir", o]);
    assert_eq!(r.code, 0);
    let v = run(&["verify", "--input", out.join("measure.dump").to_str().unwrap(), "--output-dir", o]);
    assert_eq!(v.code, 2);
    assert!(v.err.contains("checksum"), "{}", v.err);
}

#[test]
fn stability_on_digit_set() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write(dir.path(), "digit.toml", DIGIT);
    let d = dir.path().to_str().unwrap();
    let r = run(&["stability", "--input", &spec, "--n-max", "24", "--theta", "0.5", "--delta-grid", "2^-2..2^-8", "--s", "0.3", "--t", "0.4", "--output-dir", d]);
    assert_eq!(r.code, 0, "{}", r.err);
    assert!(r.num("mid_ratio") <= 8.0 && r.num("fine_ratio") <= 8.0);
    assert!(r.num("min_total") >= 0.1);
    assert_eq!(r.field("premise"), "holds");
    assert_eq!(table(&r.out, "grid").len(), 7);
    let r = run(&["stability", "--input", &spec, "--n-max", "24", "--theta", "0.5", "--delta", "2^-2..2^-8", "--s", "0.3", "--t", "0.9", "--output-dir", d]);
    assert!(r.field("premise").starts_with("failed"));
}

#[test]
fn profile_as_table() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write(dir.path(), "cantor.toml", CANTOR);
    let d = dir.path().to_str().unwrap();
    let r = run(&["profile", "--input", &spec, "--n-max", "12", "--theta", "0.5,1", "--format", "table", "--output-dir", d]);
    assert_eq!(r.code, 0, "{}", r.err);
    assert!(r.out.starts_with("# frostman profile\n# config_hash = "));
    assert!(r.out.contains("theta,delta,a,b,s,s_lo,s_hi\n"));
    assert_eq!(std::fs::read_to_string(dir.path().join("profile.csv")).unwrap(), r.out);
}

#[test]
fn tree_inputs_are_accepted() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write(dir.path(), "cantor.toml", CANTOR);
    let d = dir.path().to_str().unwrap();
    assert_eq!(run(&["ingest", "--input", &spec, "--n-max", "14", "--output-dir", d]).code, 0);
    let tree = dir.path().join("tree.dyot");
    let from_tree = run(&["estimate", "--input", tree.to_str().unwrap(), "--box", "--output-dir", d]);
    let from_spec = run(&["estimate", "--input", &spec, "--n-max", "14", "--box", "--output-dir", d]);
    assert_eq!(from_tree.field("box"), from_spec.field("box"));
    let r = run(&["estimate", "--input", tree.to_str().unwrap(), "--n-max", "10", "--box", "--output-dir", d]);
    assert_eq!(r.code, 2);
}
