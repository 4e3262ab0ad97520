use std::time::Duration;

use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};
use mlpcm_bench::{alamouti, determinant_labelling, llrs};
use mlpcm_core::channel::sample_channel_batch;
use mlpcm_core::infotheory::{level_llr, mutual_information};
use mlpcm_core::mapping::ConstellationKind;
use mlpcm_core::mlc::{msd_decode, rank_bit_channels, sample_frame, select_information_sets, Link};
use mlpcm_core::polar::ScDecoder;
use mlpcm_core::NoiseSpec;

fn sc_decode(c: &mut Criterion) {
    let mut group = c.benchmark_group("sc_decode");
    for n in [64usize, 256, 1024] {
        let y = llrs(n);
        let frozen: Vec<bool> = (0..n).map(|i| i < n / 2).collect();
        let mut dec = ScDecoder::new(n).unwrap();
        let mut u = vec![0u8; n];
        group.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, _| {
            b.iter(|| {
                dec.decode_with(black_box(&y), &mut u, |i, llr| if frozen[i] { 0 } else { u8::from(llr < 0.0) })
                    .len()
            })
        });
    }
    group.finish();
}

fn demapper(c: &mut Criterion) {
    let cb = alamouti(ConstellationKind::Qam16);
    let spm = determinant_labelling(&cb);
    let noise = NoiseSpec::from_snr_db(10.0, 2).unwrap();
    let h = sample_channel_batch(2, 2, 1, 1, 0).unwrap().matrices.remove(0);
    let y = mlpcm_core::ComplexMatrix::zeros(2, 2);
    c.bench_function("level_llr/alamouti16qam/level1", |b| {
        b.iter(|| level_llr(black_box(&y), &h, &spm, &cb, 1, &[], noise).unwrap())
    });
    c.bench_function("mutual_information/alamouti16qam/mc256", |b| {
        b.iter(|| mutual_information(&cb, black_box(&h), noise, 256, 7).unwrap())
    });
}

fn labelling(c: &mut Criterion) {
    let cb = alamouti(ConstellationKind::Qam16);
    c.bench_function("set_merge_labeling/alamouti16qam", |b| b.iter(|| determinant_labelling(black_box(&cb))));
}

fn frame(c: &mut Criterion) {
    let cb = alamouti(ConstellationKind::Qpsk);
    let spm = determinant_labelling(&cb);
    let link = Link::new(&cb, &spm, 2).unwrap();
    let rank = rank_bit_channels(&link, 64, 6.0, 200, 1).unwrap();
    let code = select_information_sets(&rank, 128).unwrap();
    let data = vec![1u8; code.k()];
    let noise = NoiseSpec::from_snr_db(6.0, 2).unwrap();
    let (h, blocks, tv) = sample_frame(&code, &link, &data, 6.0, 3, 0).unwrap();
    c.bench_function("msd_decode/alamouti_qpsk/n64", |b| {
        b.iter(|| msd_decode(&code, &spm, &cb, black_box(&blocks), &h, noise, tv).unwrap())
    });
}

criterion_group! {
    name = benches;
    config = Criterion::default().measurement_time(Duration::from_secs(3)).warm_up_time(Duration::from_secs(1));
    targets = sc_decode, demapper, labelling, frame
}
criterion_main!(benches);
