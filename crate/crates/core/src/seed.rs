/// Derives an independent stream seed from a base seed and a path of
/// integers (round, client, class, ...), using the splitmix64 finalizer.
pub fn derive_seed(base: u64, path: &[u64]) -> u64 {
    let mut x = mix(base ^ 0x9e37_79b9_7f4a_7c15);
    for &p in path {
        x = mix(x ^ mix(p.wrapping_add(0x632b_e59b_d9b4_e019)));
    }
    x
}

fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
