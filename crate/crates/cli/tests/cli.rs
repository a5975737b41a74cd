use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use octafaz::raster::{save_gray, BitDepth, GrayImage};
use sha2::{Digest, Sha256};

const GREEN: [u8; 3] = [0, 255, 0];
const RED: [u8; 3] = [255, 0, 0];
const YELLOW: [u8; 3] = [255, 255, 0];

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_octafaz")).current_dir(dir).args(args).output().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn ok(dir: &Path, args: &[&str]) {
    let o = run(dir, args);
    assert!(o.status.success(), "octafaz {args:?}: {}", stderr(&o));
}

/// Binary PPM pixels.
fn ppm_pixels(bytes: &[u8]) -> Vec<[u8; 3]> {
    let mut fields = 0;
    let mut i = 0;
    while fields < 4 {
        while bytes[i].is_ascii_whitespace() {
            i += 1;
        }
        while !bytes[i].is_ascii_whitespace() {
            i += 1;
        }
        fields += 1;
    }
    bytes[i + 1..].chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect()
}

fn count(px: &[[u8; 3]], rgb: [u8; 3]) -> usize {
    px.iter().filter(|&&p| p == rgb).count()
}

fn sha(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn synth_small(dir: &Path) {
    fs::write(dir.join("run.cfg"), "synth_n_each=2\n").unwrap();
    ok(dir, &["--config", "run.cfg", "--seed", "3", "--out", "syn", "synth"]);
}

#[test]
fn overlays_draw_the_measured_chords() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    synth_small(dir);
    ok(dir, &["--config", "run.cfg", "--manifest", "syn/manifest.csv", "--out", "q", "quantify"]);
    let rows = fs::read_to_string(dir.join("q/metrics.csv")).unwrap();
    let mm_per_px = 3.0 / 245.0;
    let mut hashes = Vec::new();
    for line in rows.lines().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        let (id, d_max) = (f[0], f[5].parse::<f64>().unwrap() / mm_per_px);
        let bytes = fs::read(dir.join(format!("q/overlays/{id}_manual.ppm"))).unwrap();
        let px = ppm_pixels(&bytes);
        assert_eq!(px.len(), 245 * 245);
        // A Bresenham line covers max(|dx|, |dy|) + 1 pixels; the red chord
        // crosses it at the centroid.
        let green = count(&px, GREEN) as f64;
        assert!(green >= d_max / 2f64.sqrt() - 3.0 && green <= d_max + 2.0, "{id}: {green} green, d_max {d_max}");
        assert!(count(&px, RED) > 0 && count(&px, YELLOW) > 0, "{id}");
        hashes.push(format!("{id} {}", sha(&bytes)));
    }
    assert_eq!(hashes.len(), 4);
    let golden = fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden/overlays.sha256")).unwrap();
    assert_eq!(hashes.join("\n"), golden.trim_end(), "overlay bytes changed");
}

#[test]
fn mixed_fields_of_view_are_refused() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    synth_small(dir);
    for preset in ["optovue3mm304", "prototype2mm300"] {
        let o = run(dir, &["--preset", preset, "--manifest", "syn/manifest.csv", "--out", "q", "quantify"]);
        assert_eq!(o.status.code(), Some(2), "{preset}");
        assert!(stderr(&o).contains("a training set is needed for each field of view"), "{}", stderr(&o));
    }
}

#[test]
fn config_errors_name_the_line() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    fs::write(dir.join("bad.cfg"), "seed=4\nlearning_rat=0.1\n").unwrap();
    let o = run(dir, &["--config", "bad.cfg", "synth"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("config line 2"), "{}", stderr(&o));
    let o = run(dir, &["--preset", "cirrus", "synth"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn evaluate_lists_unpaired_eyes() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    synth_small(dir);
    fs::create_dir(dir.join("pred")).unwrap();
    let ids: Vec<String> = fs::read_to_string(dir.join("syn/truth.csv"))
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').next().unwrap().to_string())
        .collect();
    fs::copy(dir.join(format!("syn/truth/{}.pgm", ids[0])), dir.join(format!("pred/{}.pgm", ids[0]))).unwrap();
    let o = run(dir, &["--manifest", "syn/manifest.csv", "--out", "ev", "evaluate", "--pred", "pred", "--kind", "mask"]);
    assert_eq!(o.status.code(), Some(2));
    let msg = stderr(&o);
    assert!(ids[1..].iter().all(|id| msg.contains(id.as_str())) && !msg.contains(ids[0].as_str()), "{msg}");

    for id in &ids[1..] {
        fs::copy(dir.join(format!("syn/truth/{id}.pgm")), dir.join(format!("pred/{id}.pgm"))).unwrap();
    }
    ok(dir, &["--manifest", "syn/manifest.csv", "--out", "ev", "evaluate", "--pred", "pred", "--kind", "mask"]);
    let agreement = fs::read_to_string(dir.join("ev/agreement.csv")).unwrap();
    let per_eye: Vec<&str> = agreement.lines().take_while(|l| !l.is_empty()).skip(1).collect();
    assert_eq!(per_eye.len(), ids.len());
    assert!(per_eye.iter().all(|l| l.ends_with(",1.000000,1.000000,1.000000,1.000000")), "{agreement}");
}

#[test]
fn crescent_faz_is_reported_without_diameters() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let side = 245;
    let image = GrayImage::from_fn(side, side, |x, y| ((x * 7 + y * 3) % 50) as f64 / 50.0).unwrap();
    save_gray(&image, dir.join("eye.pgm"), BitDepth::Eight).unwrap();
    let c = side as f64 / 2.0;
    let crescent = GrayImage::from_fn(side, side, |x, y| {
        let (dx, dy) = (x as f64 - c, y as f64 - c);
        let faz = dx.hypot(dy) > 25.0 && dx.hypot(dy) < 40.0 && !(dx > 20.0 && dy.abs() < 10.0);
        if faz { 0.0 } else { 1.0 }
    })
    .unwrap();
    let disk = GrayImage::from_fn(side, side, |x, y| if (x as f64 - c).hypot(y as f64 - c) < 30.0 { 0.0 } else { 1.0 }).unwrap();
    save_gray(&crescent, dir.join("crescent.pgm"), BitDepth::Eight).unwrap();
    save_gray(&disk, dir.join("disk.pgm"), BitDepth::Eight).unwrap();
    fs::write(dir.join("m.csv"), "eye_id,cohort,image_path,manual_mask_path,roi_path\nc1,healthy,eye.pgm,crescent.pgm,\nd1,healthy,eye.pgm,disk.pgm,\n").unwrap();

    let o = run(dir, &["--manifest", "m.csv", "--out", "q", "quantify"]);
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
    let log = fs::read_to_string(dir.join("q/exceptions.log")).unwrap();
    assert!(log.contains("c1,manual,centroid") && !log.contains("d1"), "{log}");
    let rows = fs::read_to_string(dir.join("q/metrics.csv")).unwrap();
    let c1 = rows.lines().find(|l| l.starts_with("c1,")).unwrap();
    let f: Vec<&str> = c1.split(',').collect();
    assert!(f[3].parse::<f64>().unwrap() > 0.0 && f[4].is_empty() && f[5].is_empty() && f[6].is_empty(), "{c1}");
    let d1: Vec<&str> = rows.lines().find(|l| l.starts_with("d1,")).unwrap().split(',').collect();
    let d_px = d1[4].parse::<f64>().unwrap() / (3.0 / 245.0);
    assert!((d_px - 60.0).abs() < 1.0, "{d_px}");
    let px = ppm_pixels(&fs::read(dir.join("q/overlays/c1_manual.ppm")).unwrap());
    assert!(count(&px, YELLOW) > 0 && count(&px, GREEN) == 0 && count(&px, RED) == 0);
}
