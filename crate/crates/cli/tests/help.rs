use std::process::Command;

fn leaves(cmd: &clap::Command, path: Vec<String>, out: &mut Vec<(Vec<String>, clap::Command)>) {
    let subs: Vec<_> = cmd.get_subcommands().filter(|s| s.get_name() != "help").collect();
    if subs.is_empty() {
        out.push((path, cmd.clone()));
        return;
    }
    for sub in subs {
        let mut p = path.clone();
        p.push(sub.get_name().to_string());
        leaves(sub, p, out);
    }
}

#[test]
fn every_command_and_flag_is_documented() {
    let mut cmd = qmatch_cli::command();
    cmd.build();
    let mut all = Vec::new();
    leaves(&cmd, vec![], &mut all);
    let names: Vec<String> = all.iter().map(|(p, _)| p.join(" ")).collect();
    for expected in [
        "ingest", "stats", "sample", "emb convert", "topic add", "topic list", "topic remove",
        "calibrate", "match", "diag dist", "diag heatmap", "eval", "serve",
    ] {
        assert!(names.iter().any(|n| n == expected), "missing subcommand {expected}");
    }

    for (path, leaf) in &all {
        assert!(leaf.get_about().is_some(), "{path:?} has no description");
        let output = Command::new(env!("CARGO_BIN_EXE_qmatch"))
            .args(path)
            .arg("--help")
            .output()
            .unwrap();
        assert!(output.status.success(), "{path:?} --help failed");
        let help = String::from_utf8(output.stdout).unwrap();
        for arg in leaf.get_arguments() {
            let Some(long) = arg.get_long() else { continue };
            if matches!(long, "help" | "version") {
                continue;
            }
            assert!(arg.get_help().is_some(), "{path:?} --{long} has no help text");
            assert!(help.contains(&format!("--{long}")), "{path:?} help does not show --{long}");
        }
    }
}

#[test]
fn top_level_help_and_version() {
    let out = Command::new(env!("CARGO_BIN_EXE_qmatch")).arg("--help").output().unwrap();
    assert!(out.status.success());
    let help = String::from_utf8(out.stdout).unwrap();
    for flag in ["--seed", "--data-dir", "--quiet", "--format"] {
        assert!(help.contains(flag), "{flag}");
    }
    let out = Command::new(env!("CARGO_BIN_EXE_qmatch")).arg("--version").output().unwrap();
    assert!(out.status.success());
    assert!(String::from_utf8(out.stdout).unwrap().contains(env!("CARGO_PKG_VERSION")));
}
