use std::time::Instant;

use nalgebra::Vector3;
use serde::Serialize;
use splatsem::render::render;
use splatsem::synth::{random_gaussians, Rng};
use splatsem::voxel::voxelize;
use splatsem::CameraView;

use crate::args::{BenchArgs, BenchOp};
use crate::output::report;
use crate::{usage, CliResult};

#[derive(Debug, Serialize)]
pub struct BenchReport {
    pub op: &'static str,
    pub n: usize,
    /// Image side for render; absent for voxelize.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub size: Option<usize>,
    pub runs: usize,
    pub median_ms: f64,
    pub throughput: f64,
    pub throughput_unit: &'static str,
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

fn time_runs(runs: usize, mut f: impl FnMut()) -> Vec<f64> {
    (0..runs)
        .map(|_| {
            let t = Instant::now();
            f();
            t.elapsed().as_secs_f64() * 1e3
        })
        .collect()
}

pub fn run(a: BenchArgs) -> CliResult<()> {
    if a.runs == 0 || a.n == 0 {
        return usage("--runs and --n must be positive");
    }
    let mut rng = Rng::new(a.seed);
    let report_value = match a.op {
        BenchOp::Render => {
            if a.size == 0 {
                return usage("--size must be positive");
            }
            let scene = random_gaussians(&mut rng, a.n, 16, 1.0);
            let view = CameraView::look_at(
                Vector3::new(0.0, -3.0, 1.5),
                Vector3::zeros(),
                Vector3::z(),
                a.size as f64,
                a.size,
                a.size,
            )?;
            let times = time_runs(a.runs, || {
                std::hint::black_box(render(&scene, &view, [0.0; 3]));
            });
            let ms = median(times);
            BenchReport {
                op: "render",
                n: a.n,
                size: Some(a.size),
                runs: a.runs,
                median_ms: ms,
                throughput: (a.size * a.size) as f64 / (ms / 1e3),
                throughput_unit: "pixels/s",
            }
        }
        BenchOp::Voxelize => {
            if !(a.voxel_size > 0.0) || !(a.lambda >= 0.0) {
                return usage("--voxel-size must be positive and --lambda non-negative");
            }
            let scene = random_gaussians(&mut rng, a.n, 16, 10.0);
            let mut failure = None;
            let times = time_runs(a.runs, || {
                if let Err(e) = voxelize(&scene, a.voxel_size, a.lambda) {
                    failure = Some(e);
                }
            });
            if let Some(e) = failure {
                return Err(e.into());
            }
            let ms = median(times);
            BenchReport {
                op: "voxelize",
                n: a.n,
                size: None,
                runs: a.runs,
                median_ms: ms,
                throughput: a.n as f64 / (ms / 1e3),
                throughput_unit: "primitives/s",
            }
        }
    };
    report(true, &report_value, String::new)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::median;

    #[test]
    fn median_of_odd_and_even() {
        assert_eq!(median(vec![3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(vec![4.0, 1.0, 3.0, 2.0]), 2.5);
    }
}
