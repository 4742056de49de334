mod common;

use common::{read, small_config};
use ipsrf::measure::parse_cloud_table;
use ipsrf_cli::{run, write_run, Manifest, Summary};
use tempfile::tempdir;

#[test]
fn same_seed_gives_identical_files() {
    let cfg = small_config();
    let (a, b) = (tempdir().unwrap(), tempdir().unwrap());
    let ma = write_run(&run(&cfg, 1).unwrap(), a.path(), true).unwrap();
    let mb = write_run(&run(&cfg, 1).unwrap(), b.path(), true).unwrap();
    assert_eq!(ma, mb);
    assert_eq!(read(a.path(), "manifest.json"), read(b.path(), "manifest.json"));
    for entry in ma.data.iter().chain(&ma.figures) {
        assert_eq!(read(a.path(), &entry.path), read(b.path(), &entry.path), "{}", entry.path);
    }
}

#[test]
fn worker_count_does_not_change_results() {
    let cfg = small_config();
    let (a, b) = (tempdir().unwrap(), tempdir().unwrap());
    let ma = write_run(&run(&cfg, 1).unwrap(), a.path(), true).unwrap();
    let mb = write_run(&run(&cfg, 3).unwrap(), b.path(), true).unwrap();
    assert_eq!(ma, mb);
}

#[test]
fn seed_changes_the_trajectories() {
    let mut cfg = small_config();
    let a = run(&cfg, 1).unwrap();
    cfg.seed += 1;
    let b = run(&cfg, 1).unwrap();
    assert_ne!(a.epochs[0].path, b.epochs[0].path);
    // the invariant estimates do not depend on the seed
    assert_eq!(a.epochs[0].invariant.measure, b.epochs[0].invariant.measure);
}

#[test]
fn epochs_hand_off_their_final_cloud() {
    let cfg = small_config();
    let artifacts = run(&cfg, 1).unwrap();
    let dir = tempdir().unwrap();
    write_run(&artifacts, dir.path(), false).unwrap();
    for k in 0..artifacts.epochs.len() - 1 {
        let (this, next) = (&artifacts.epochs[k], &artifacts.epochs[k + 1]);
        assert_eq!(this.last.points(), next.start.points());
        assert_eq!((next.start.epoch, next.start.step), (k + 1, 0));
        let t = cfg.schedule.epochs[k].length;
        let end = read(dir.path(), &format!("clouds/epoch{k}_step{t}.txt"));
        let start = read(dir.path(), &format!("clouds/epoch{}_step0.txt", k + 1));
        assert_eq!(end, start);
    }
    // the first epoch starts every particle at the configured point
    let first = read(dir.path(), "clouds/epoch0_step0.txt");
    let cloud = parse_cloud_table(std::str::from_utf8(&first).unwrap(), 0, 0).unwrap();
    assert!(cloud.points().iter().all(|v| *v == 0.0));
    assert_eq!(cloud.len(), cfg.simulation.particles);
}

#[test]
fn zero_epochs_write_a_valid_empty_run() {
    let mut cfg = small_config();
    cfg.schedule.epochs.clear();
    let artifacts = run(&cfg, 1).unwrap();
    assert!(artifacts.epochs.is_empty());
    assert!(artifacts.bounds.report.records.is_empty());
    let dir = tempdir().unwrap();
    let manifest = write_run(&artifacts, dir.path(), true).unwrap();
    assert!(manifest.figures.is_empty());
    assert!(!dir.path().join("figures").exists());
    assert_eq!(Manifest::load(dir.path()).unwrap(), manifest);
    assert!(manifest.verify(dir.path()).unwrap().is_empty());
    let csv = String::from_utf8(read(dir.path(), "distances.csv")).unwrap();
    assert_eq!(csv, "epoch,step,d_subsequent,d_to_invariant\n");
}

#[test]
fn histogram_masses_sum_to_at_most_one() {
    let artifacts = run(&small_config(), 1).unwrap();
    let dir = tempdir().unwrap();
    write_run(&artifacts, dir.path(), false).unwrap();
    for k in 0..3 {
        let text = String::from_utf8(read(dir.path(), &format!("histograms/epoch{k}.csv"))).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("ix,iy,x_lo,x_hi,y_lo,y_hi,mass"));
        let total: f64 = lines
            .map(|l| l.rsplit(',').next().unwrap().parse::<f64>().unwrap())
            .inspect(|m| assert!(*m >= 0.0))
            .sum();
        assert!(total <= 1.0 + 1e-12, "epoch {k}: {total}");
        assert!(total > 0.9, "window should hold most of the path, got {total}");
    }
}

#[test]
fn manifest_lists_every_file_and_detects_edits() {
    let artifacts = run(&small_config(), 1).unwrap();
    let dir = tempdir().unwrap();
    let manifest = write_run(&artifacts, dir.path(), true).unwrap();
    assert_eq!(manifest.figures.len(), 1 + 3 + 2);
    let mut listed: Vec<String> = manifest.data.iter().chain(&manifest.figures).map(|e| e.path.clone()).collect();
    listed.push("manifest.json".into());
    listed.sort();
    let mut on_disk = Vec::new();
    let mut stack = vec![dir.path().to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(d).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(dir.path()).unwrap();
                on_disk.push(rel.to_string_lossy().replace('\\', "/"));
            }
        }
    }
    on_disk.sort();
    assert_eq!(listed, on_disk);

    assert!(manifest.verify(dir.path()).unwrap().is_empty());
    std::fs::write(dir.path().join("distances.csv"), "tampered\n").unwrap();
    let problems = manifest.verify(dir.path()).unwrap();
    assert_eq!(problems, vec!["distances.csv: hash mismatch".to_string()]);
}

#[test]
fn distance_series_has_documented_shape() {
    let cfg = small_config();
    let artifacts = run(&cfg, 1).unwrap();
    let dir = tempdir().unwrap();
    write_run(&artifacts, dir.path(), false).unwrap();
    let text = String::from_utf8(read(dir.path(), "distances.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("epoch,step,d_subsequent,d_to_invariant"));
    let rows: Vec<Vec<f64>> = lines
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect();
    // steps 1..=5 and every 50th step up to 400, per epoch
    assert_eq!(rows.len(), 3 * (5 + 8));
    assert!(rows.iter().all(|r| r.len() == 4 && r[2] >= 0.0 && r[3] >= 0.0));

    let summary: Summary = serde_json::from_slice(&read(dir.path(), "summary.json")).unwrap();
    for e in &summary.epochs {
        let series: Vec<&Vec<f64>> = rows.iter().filter(|r| r[0] as usize == e.epoch).collect();
        // non-increasing up to the merge slack of the estimator
        for (i, a) in series.iter().enumerate() {
            for b in &series[i + 1..] {
                assert!(b[3] <= a[3] + e.slack_to_invariant, "epoch {}: {a:?} then {b:?}", e.epoch);
            }
        }
    }
}
