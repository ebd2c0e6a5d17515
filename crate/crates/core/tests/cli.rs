use std::path::Path;
use std::process::{Command, Output};

fn g2lstm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_g2lstm"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_corpus(dir: &Path) {
    let verse = "in the beginning god created the heaven and the earth.\n\
                 and the earth was without form, and void.\n";
    std::fs::write(dir.join("train.txt"), verse.repeat(6)).unwrap();
    std::fs::write(dir.join("valid.txt"), verse).unwrap();
    std::fs::write(dir.join("test.txt"), verse).unwrap();
}

fn stdout(o: &Output) -> String {
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    String::from_utf8(o.stdout.clone()).unwrap()
}

#[test]
fn train_eval_compress_stats_trace() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    write_corpus(d);
    let data = d.to_str().unwrap();
    let model = d.join("m.g2lm");
    let model_s = model.to_str().unwrap();
    let train = |out: &str| {
        g2lstm(&[
            "train",
            "--data",
            data,
            "--gate-mode",
            "gumbel",
            "--tau",
            "0.9",
            "--clip-norm",
            "2.0",
            "--seed",
            "1",
            "--layers",
            "2",
            "--hidden",
            "12",
            "--embed",
            "8",
            "--epochs",
            "2",
            "--batch",
            "4",
            "--window",
            "10",
            "--out",
            out,
        ])
    };

    let log = stdout(&train(model_s));
    assert!(log.starts_with("step,epoch,train_loss,val_ppl,grad_norm_preclip,lr,wallclock_s\n"));
    assert!(log.lines().count() > 2);

    let again = d.join("m2.g2lm");
    stdout(&train(again.to_str().unwrap()));
    assert_eq!(std::fs::read(&model).unwrap(), std::fs::read(&again).unwrap());

    let eval = stdout(&g2lstm(&["eval", "--model", model_s, "--data", data, "--unigram"]));
    let mut lines = eval.lines();
    assert_eq!(lines.next(), Some("model,split,tokens,mean_nll,perplexity"));
    assert!(lines.next().unwrap().starts_with("gumbel,test,"));
    assert!(lines.next().unwrap().starts_with("unigram,test,"));

    let compressed = d.join("c.g2lm");
    let report = stdout(&g2lstm(&[
        "compress",
        "--model",
        model_s,
        "--kind",
        "roundclip",
        "--r",
        "0.2",
        "--c",
        "0.4",
        "--data",
        data,
        "--out",
        compressed.to_str().unwrap(),
    ]));
    assert!(report.starts_with("kind,params,ppl_before,ppl_after,delta\nroundclip,r=0.2;c=0.4,"));
    let lowrank = g2lstm(&[
        "compress", "--model", model_s, "--kind", "lowrank", "--k", "3", "--data", data,
    ]);
    assert!(stdout(&lowrank).contains("\nlowrank,k=3,"));
    let bad = g2lstm(&["compress", "--model", model_s, "--kind", "lowrank", "--data", data]);
    assert_eq!(bad.status.code(), Some(2));

    let stats_dir = d.join("stats");
    let summary = stdout(&g2lstm(&[
        "gate-stats",
        "--model",
        compressed.to_str().unwrap(),
        "--data",
        data,
        "--out-dir",
        stats_dir.to_str().unwrap(),
    ]));
    assert!(summary.starts_with("gate,total,saturation_low,saturation_high,saturation\ninput,"));
    let hist = std::fs::read_to_string(stats_dir.join("forget_histogram.csv")).unwrap();
    assert_eq!(hist.lines().next(), Some("bin_lo,bin_hi,count"));
    assert_eq!(hist.lines().count(), 51);

    let trace = stdout(&g2lstm(&["trace", "--model", model_s, "--text", "and god, said"]));
    let rows: Vec<&str> = trace.lines().collect();
    assert_eq!(rows[0], "token,avg_input,avg_forget");
    assert_eq!(rows.len(), 1 + "and god, said".chars().count());
    assert!(rows.iter().any(|r| r.starts_with("\",\",")));
}

#[test]
fn exit_codes() {
    assert_eq!(g2lstm(&[]).status.code(), Some(2));
    assert_eq!(g2lstm(&["train", "--data", "x"]).status.code(), Some(2));
    let missing = g2lstm(&[
        "train",
        "--data",
        "/nonexistent/dir",
        "--out",
        "/tmp/never.g2lm",
        "--epochs",
        "1",
    ]);
    assert_eq!(missing.status.code(), Some(1));
    let gumbel = g2lstm(&["verify-gumbel", "--grid", "default", "--n", "10000", "--seed", "7"]);
    let csv = stdout(&gumbel);
    assert_eq!(csv.lines().count(), 61);
    assert!(csv.lines().skip(1).all(|l| l.ends_with(",true")));
}
