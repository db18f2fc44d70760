use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use flux_core::arena::{play_game, write_transcripts};
use flux_core::agents::{Agent, Decision, Player};
use flux_core::env::{Action, GameState, Role, Rules};
use flux_core::GameRng;

fn flux(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_flux"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn train_with_zero_episodes() {
    let dir = tempfile::tempdir().unwrap();
    let o = flux(&["train", "--episodes", "0", "-o", p(dir.path())]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).contains("final epsilon: 1\n"), "{}", stdout(&o));
    for f in ["q_shrinker.txt", "q_amplifier.txt", "training_curve.csv", "run.cfg"] {
        assert!(dir.path().join(f).is_file(), "{f}");
    }
    let q = fs::read_to_string(dir.path().join("q_shrinker.txt")).unwrap();
    assert!(q.contains("#states=0"));
}

#[test]
fn train_is_byte_identical_across_runs() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [&a, &b] {
        let o = flux(&["train", "--episodes", "3000", "--seed", "7", "-o", p(d.path())]);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    }
    for f in ["q_shrinker.txt", "q_amplifier.txt", "training_curve.csv", "train_summary.txt"] {
        assert_eq!(
            fs::read(a.path().join(f)).unwrap(),
            fs::read(b.path().join(f)).unwrap(),
            "{f} differs"
        );
    }
}

#[test]
fn train_into_unwritable_dir_is_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let blocker = dir.path().join("file");
    fs::write(&blocker, "x").unwrap();
    let o = flux(&["train", "--episodes", "1", "-o", p(&blocker.join("sub"))]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn solve_reports_one_winner_and_is_deterministic() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let o = flux(&["solve", "-o", p(a.path())]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    assert_eq!(text.matches("initial state winner:").count(), 1);
    assert!(text.contains("initial state winner: amplifier") ^ text.contains("initial state winner: shrinker"));

    let o = flux(&["solve", "--rational", "-o", p(b.path())]);
    let line = stdout(&o)
        .lines()
        .find(|l| l.starts_with("random-play"))
        .unwrap()
        .to_owned();
    assert!(line.contains('/'), "{line}");
    assert_eq!(
        fs::read(a.path().join("solved.txt")).unwrap(),
        fs::read(b.path().join("solved.txt")).unwrap()
    );
    let export = fs::read_to_string(a.path().join("solved.txt")).unwrap();
    assert!(export.starts_with("#kind=solved"));
    assert!(export.contains("\n2,1,3,1,2|0\tamplifier,"));
}

#[test]
fn tournament_stats_transcripts_and_replay() {
    let dir = tempfile::tempdir().unwrap();
    let out = p(dir.path());
    let o = flux(&[
        "tournament", "--p0", "random", "--p1", "random", "--games", "200", "--seed", "1",
        "--transcripts", "-o", out,
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let csv = fs::read_to_string(dir.path().join("stats.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(
        lines.next(),
        Some("matchup,role,wins,games,win_rate,ci_low,ci_high,avg_moves,invalid_pct")
    );
    let wins: u64 = lines
        .map(|l| l.split(',').nth(2).unwrap().parse::<u64>().unwrap())
        .sum();
    assert_eq!(wins, 200);

    let transcript = dir.path().join("transcripts.jsonl");
    let o = flux(&["replay", p(&transcript)]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));

    // bump one recorded cell value on the third line
    let text = fs::read_to_string(&transcript).unwrap();
    let mut rows: Vec<String> = text.lines().map(str::to_owned).collect();
    let mut v: serde_json::Value = serde_json::from_str(&rows[2]).unwrap();
    let ply = v["ply"].as_u64().unwrap();
    v["cells_after"][0] = (v["cells_after"][0].as_u64().unwrap() + 1).into();
    rows[2] = v.to_string();
    let tampered = dir.path().join("tampered.jsonl");
    fs::write(&tampered, rows.join("\n") + "\n").unwrap();
    let o = flux(&["replay", p(&tampered)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains(&format!("ply {ply}")), "{}", stdout(&o));

    let broken = dir.path().join("broken.jsonl");
    fs::write(&broken, format!("{}\n{{not json\n", rows[0])).unwrap();
    let o = flux(&["replay", p(&broken)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains(":2:"), "{}", stderr(&o));
}

#[test]
fn same_seed_same_stats_regardless_of_jobs() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for (d, jobs) in [(&a, "1"), (&b, "4")] {
        let o = flux(&[
            "tournament", "--p0", "heuristic", "--p1", "random", "--games", "300", "--seed", "9",
            "--jobs", jobs, "-o", p(d.path()),
        ]);
        assert_eq!(o.status.code(), Some(0));
    }
    assert_eq!(
        fs::read(a.path().join("stats.csv")).unwrap(),
        fs::read(b.path().join("stats.csv")).unwrap()
    );
}

#[test]
fn bad_agents_are_usage_errors() {
    let o = flux(&["tournament", "--p0", "alphazero", "--p1", "random"]);
    assert_eq!(o.status.code(), Some(2));
    let o = flux(&["tournament", "--p0", "rl:/nonexistent/q.txt", "--p1", "random", "-o", p(tempfile::tempdir().unwrap().path())]);
    assert_eq!(o.status.code(), Some(2));
    let o = flux(&["tournament", "--p0", "human", "--p1", "random", "-o", p(tempfile::tempdir().unwrap().path())]);
    assert_eq!(o.status.code(), Some(2));
    let o = flux(&["frobnicate"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn scripted_llm_against_trained_amplifier() {
    let dir = tempfile::tempdir().unwrap();
    let out = p(dir.path());
    let o = flux(&["train", "--episodes", "3000", "-o", out]);
    assert_eq!(o.status.code(), Some(0));
    let script = dir.path().join("replies.txt");
    fs::write(&script, "DRAIN 0\nno idea\nDRAIN 9\nAMPLIFY 1\n").unwrap();

    let p0 = format!("llm:scripted={}", script.display());
    let p1 = format!("rl:{}", dir.path().join("q_amplifier").display());
    let o = flux(&["tournament", "--p0", &p0, "--p1", &p1, "--games", "5", "-o", out]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = stdout(&o);
    assert!(text.contains("llm plies:"), "{text}");
    let csv = fs::read_to_string(dir.path().join("stats.csv")).unwrap();
    let shrinker_row = csv.lines().nth(1).unwrap();
    let invalid_pct: f64 = shrinker_row.rsplit(',').next().unwrap().parse().unwrap();
    assert!(invalid_pct > 0.0, "{shrinker_row}");

    // a shrinker table in the amplifier seat is rejected
    let wrong = format!("rl:{}", dir.path().join("q_shrinker.txt").display());
    let o = flux(&["tournament", "--p0", "random", "--p1", &wrong, "--games", "5", "-o", out]);
    assert_eq!(o.status.code(), Some(2));

    let o = flux(&[
        "table2",
        "--q-shrinker", p(&dir.path().join("q_shrinker.txt")),
        "--q-amplifier", p(&dir.path().join("q_amplifier.txt")),
        "--games", "50", "-o", out,
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let table = fs::read_to_string(dir.path().join("table2.csv")).unwrap();
    assert_eq!(table.lines().count(), 9);
    assert!(stdout(&o).contains("RL vs. RL"));
}

#[test]
fn table2_without_tables_is_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.txt");
    let o = flux(&["table2", "--q-shrinker", p(&missing), "--q-amplifier", p(&missing), "-o", p(dir.path())]);
    assert_eq!(o.status.code(), Some(2));
}

/// Replays a fixed list of moves.
struct Script(Vec<u32>);

struct ScriptPlayer<'a>(&'a [u32], usize);

impl Player for ScriptPlayer<'_> {
    fn choose(&mut self, state: &GameState, _: Role, _: &mut GameRng) -> Decision {
        let code = self.0[self.1];
        self.1 += 1;
        Action::decode(code as i64, state.len()).unwrap().into()
    }
}

impl Agent for Script {
    fn name(&self) -> &str {
        "script"
    }
    fn start_game(&self) -> Box<dyn Player + '_> {
        Box::new(ScriptPlayer(&self.0, 0))
    }
}

#[test]
fn classify_synthetic_sum_blindness() {
    // shrinker doubles 12 in [2,1,12,1,2] while drains were available
    let record = play_game(&Script(vec![4, 4]), &Script(vec![4]), &Rules::default(), 0, 0);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("sb.jsonl");
    fs::write(&path, write_transcripts(&[record])).unwrap();
    let o = flux(&["classify", p(&path)]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    assert!(text.contains("ply 3: sum_blindness"), "{text}");
    assert!(text.trim_end().ends_with(r#"{"sum_blindness":1}"#), "{text}");
}

#[test]
fn play_with_human_input() {
    use std::io::Write;
    let mut child = Command::new(env!("CARGO_BIN_EXE_flux"))
        .args(["play", "--p0", "human", "--p1", "heuristic"])
        .stdin(std::process::Stdio::piped())
        .stdout(std::process::Stdio::piped())
        .spawn()
        .unwrap();
    let input = format!("foo\nDRAIN 1\n{}", "DRAIN 0\n".repeat(10));
    child.stdin.take().unwrap().write_all(input.as_bytes()).unwrap();
    let o = child.wait_with_output().unwrap();
    let text = stdout(&o);
    assert_eq!(o.status.code(), Some(0), "{text}");
    assert!(text.contains("try again"));
    assert!(text.contains("value   2  3  1  2"), "{text}");
    assert!(text.contains("game over after"), "{text}");
}
