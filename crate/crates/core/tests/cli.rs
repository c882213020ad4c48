use std::fs;
use std::path::Path;

use msmoments::cli::main_with_args;

fn run(args: &[&str]) -> i32 {
    let mut full = vec!["msmoments"];
    full.extend_from_slice(args);
    main_with_args(full)
}

fn read_csv(path: &Path) -> (Vec<String>, Vec<Vec<f64>>) {
    let text = fs::read_to_string(path).unwrap();
    assert!(!text.contains('\r'));
    assert!(text.ends_with('\n'));
    let mut lines = text.lines();
    let header = lines.next().unwrap().split(',').map(String::from).collect();
    let rows = lines
        .map(|l| l.split(',').map(|x| x.parse::<f64>().unwrap()).collect())
        .collect();
    (header, rows)
}

fn column(header: &[String], name: &str) -> usize {
    header
        .iter()
        .position(|h| h == name)
        .unwrap_or_else(|| panic!("no column {name}"))
}

const SMALL_MODEL: &str = r#"{
  "states": ["alive", "dead"],
  "interest": "0.02",
  "horizon": 30,
  "parameters": {"MU": 0.05},
  "intensities": {"alive->dead": "{MU}"},
  "contracts": [
    {"name": "death", "transition": {"alive->dead": "1"}},
    {"name": "annuity", "sojourn": {"alive": "0.5"}}
  ]
}"#;

#[test]
fn zeroth_moment_equals_transition_probabilities() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let range = ["--s0", "60", "--t", "70", "--out", out];
    let mut args = vec!["moments", "--k", "0,0,0"];
    args.extend_from_slice(&range);
    assert_eq!(run(&args), 0);
    let mut args = vec!["probabilities"];
    args.extend_from_slice(&range);
    assert_eq!(run(&args), 0);

    let (ph, prows) = read_csv(&dir.path().join("probabilities.csv"));
    let (vh, vrows) = read_csv(&dir.path().join("partial_moments.csv"));
    assert_eq!(prows.len(), vrows.len());
    assert_eq!(prows.len(), 2561);
    for (p, v) in prows.iter().zip(&vrows) {
        assert_eq!(p[0], v[0]);
        for a in 0..3 {
            for b in 0..3 {
                let x = p[column(&ph, &format!("p_{a}_{b}"))];
                let y = v[column(&vh, &format!("V_0-0-0_{a}_{b}"))];
                assert!((x - y).abs() <= 1e-8);
            }
        }
    }
    let (mh, mrows) = read_csv(&dir.path().join("moments.csv"));
    for row in &mrows {
        for i in 0..3 {
            assert!((row[column(&mh, &format!("V_{i}_0-0-0"))] - 1.0).abs() <= 1e-10);
        }
    }
}

#[test]
fn numbers_have_seventeen_significant_digits() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    assert_eq!(
        run(&["reserves", "--s0", "20", "--s1", "21", "--t", "30", "--out", out]),
        0
    );
    let text = fs::read_to_string(dir.path().join("reserves.csv")).unwrap();
    let mut lines = text.lines();
    assert!(lines
        .next()
        .unwrap()
        .starts_with("s,reserve_0_1,reserve_0_2,reserve_0_3,reserve_1_1"));
    for line in lines {
        for cell in line.split(',') {
            let (mantissa, _) = cell.split_once('e').unwrap();
            assert_eq!(
                mantissa.trim_start_matches('-').replace('.', "").len(),
                17,
                "{cell}"
            );
        }
    }
}

#[test]
fn custom_model_with_parameter_override() {
    let dir = tempfile::tempdir().unwrap();
    let model = dir.path().join("model.json");
    fs::write(&model, SMALL_MODEL).unwrap();
    let out = dir.path().join("out");
    let args = [
        "covariance",
        "--model",
        model.to_str().unwrap(),
        "--param",
        "MU=0.1",
        "--t",
        "10",
        "--out",
        out.to_str().unwrap(),
        "--format",
        "csv+svg",
    ];
    assert_eq!(run(&args), 0);
    let (h, rows) = read_csv(&out.join("covariance.csv"));
    assert!(out.join("covariance.svg").exists());
    let first = &rows[0];
    assert_eq!(first[column(&h, "s")], 0.0);
    assert_eq!(first[column(&h, "state")], 0.0);
    let (mu, r, len): (f64, f64, f64) = (0.1, 0.02, 10.0);
    let m1 = mu / (mu + r) * (1.0 - (-(mu + r) * len).exp());
    let m2 = mu / (mu + 2.0 * r) * (1.0 - (-(mu + 2.0 * r) * len).exp());
    let var = first[column(&h, "cov_11")];
    assert!((var - (m2 - m1 * m1)).abs() <= 1e-8 * var, "{var}");
}

#[test]
fn reproduce_disability_writes_curves() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    assert_eq!(
        run(&[
            "reproduce-disability",
            "--h",
            "0.0625",
            "--out",
            out,
            "--format",
            "csv+svg"
        ]),
        0
    );
    for name in ["disability_covariance.csv", "disability_correlation.csv"] {
        let (_, rows) = read_csv(&dir.path().join(name));
        let last = rows.last().unwrap()[0];
        assert_eq!(rows.first().unwrap()[0], 0.0);
        assert_eq!(last, 25.0);
    }
    let svgs = fs::read_dir(dir.path())
        .unwrap()
        .filter(|e| {
            e.as_ref()
                .unwrap()
                .path()
                .extension()
                .is_some_and(|x| x == "svg")
        })
        .count();
    assert!(svgs >= 2);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();

    let missing = dir.path().join("missing.json");
    assert_eq!(run(&["validate", "--model", missing.to_str().unwrap()]), 2);
    let broken = dir.path().join("broken.json");
    fs::write(&broken, "{\"states\": [").unwrap();
    assert_eq!(run(&["validate", "--model", broken.to_str().unwrap()]), 2);
    assert_eq!(run(&["moments", "--k", "1,1", "--out", out]), 2);
    assert_eq!(run(&["validate", "--param", "NOPE=1"]), 2);
    assert_eq!(run(&["probabilities", "--scheme", "rk9", "--out", out]), 2);
    assert_eq!(run(&["no-such-command"]), 2);

    assert_eq!(
        run(&["mgf", "--theta", "800,0,0", "--t", "20", "--out", out]),
        3
    );

    let negative = dir.path().join("negative.json");
    fs::write(&negative, SMALL_MODEL.replace("{MU}", "0.05 - 0.01 * t")).unwrap();
    assert_eq!(run(&["validate", "--model", negative.to_str().unwrap()]), 4);

    assert_eq!(run(&["validate"]), 0);
}

#[test]
fn margins_and_simulation_summaries() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    assert_eq!(
        run(&[
            "margins",
            "--policies",
            "400",
            "--h",
            "0.0625",
            "--out",
            out
        ]),
        0
    );
    let (h, rows) = read_csv_with_labels(&dir.path().join("margins.csv"));
    assert!(h.len() >= 2);
    assert!(!rows.is_empty());
    assert_eq!(
        run(&["simulate", "--paths", "2000", "--seed", "4", "--t", "40", "--out", out]),
        0
    );
    let (h, rows) = read_csv_with_labels(&dir.path().join("simulate.csv"));
    assert_eq!(h, ["quantity", "value", "std_error"]);
    assert!(rows.iter().any(|r| r[0].starts_with("mean")));
}

fn read_csv_with_labels(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let text = fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    let header = lines.next().unwrap().split(',').map(String::from).collect();
    let rows = lines
        .map(|l| l.split(',').map(String::from).collect())
        .collect();
    (header, rows)
}
