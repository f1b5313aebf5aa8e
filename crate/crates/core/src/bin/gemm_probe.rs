use std::time::Instant;

fn main() {
    for &(m, k, n) in &[(1024usize, 960usize, 320usize), (1024, 320, 128), (1024, 128, 128)] {
        let a = vec![1.0f64; m * k];
        let b = vec![0.5f64; k * n];
        let mut c = vec![0.0f64; m * n];
        let reps = (2_000_000_000 / (2 * m * k * n)).max(3);
        let t = Instant::now();
        for _ in 0..reps {
            unsafe {
                matrixmultiply::dgemm(
                    m, k, n, 1.0, a.as_ptr(), k as isize, 1, b.as_ptr(), n as isize, 1, 0.0,
                    c.as_mut_ptr(), n as isize, 1,
                );
            }
        }
        let secs = t.elapsed().as_secs_f64();
        let gflops = (2.0 * (m * k * n * reps as usize) as f64) / secs / 1e9;
        println!("{}x{}x{}: {:.2} GFLOP/s ({} reps, {:.2}s)", m, k, n, gflops, reps, secs);
    }
}
