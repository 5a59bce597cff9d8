use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use super::*;

fn consortium<G: Group>(
    params: &SystemParams<G>,
    n: usize,
    rng: &mut ChaCha20Rng,
) -> (KgdPublic<G>, Vec<Cosigner<G>>) {
    let keys: Vec<_> = (0..n).map(|i| CosignerKey::generate(params, i, rng)).collect();
    let kgd = KgdPublic::from_keys(&keys).unwrap();
    (kgd, keys.into_iter().map(|k| Cosigner::new(params.clone(), k)).collect())
}

fn honest_flow<G: Group>(params: SystemParams<G>) {
    let mut rng = ChaCha20Rng::seed_from_u64(1);
    let (kgd, mut cosigners) = consortium(&params, 4, &mut rng);
    let (_, partial, keys) = register_device(&params, &kgd, &mut cosigners, "veh-1", &mut rng).unwrap();
    assert_eq!(partial.signature.signers, SignerSet::full(4));
    let sig = sign_tx(&params, &keys, b"hello", &mut rng).to_bytes(&params);
    assert!(verify_tx_sig(&params, &kgd, &keys.pk, "veh-1", b"hello", &sig));
    assert!(!verify_tx_sig(&params, &kgd, &keys.pk, "veh-1", b"hellp", &sig));
    assert!(!verify_tx_sig(&params, &kgd, &keys.pk, "veh-2", b"hello", &sig));
    assert!(!verify_tx_sig(&params, &kgd, &keys.pk, "veh-1", b"hello", &sig[..sig.len() - 1]));
}

#[test]
fn honest_flow_toy() {
    honest_flow(setup_toy(42));
}

#[test]
fn honest_flow_secp256k1() {
    honest_flow(setup_standard());
}

#[test]
fn standard_level_has_256_bit_order() {
    assert_eq!(setup_standard().lambda, 256);
    assert_eq!(parse_level("standard").unwrap(), SecurityLevel::Standard);
    assert!(parse_level("128").is_err());
    assert_eq!(setup_toy(42), setup_toy(42));
}

#[test]
fn toy_commitment() {
    let params = SystemParams::new(ToyGroup::new(23, 11, 4).unwrap());
    assert_eq!(DeviceSecret::from_scalar(&params, "d", 7).commitment, 8);
}

#[test]
fn abstaining_cosigner_fails_issuance() {
    let params = setup_toy(7);
    let mut rng = ChaCha20Rng::seed_from_u64(2);
    let (kgd, mut cosigners) = consortium(&params, 4, &mut rng);
    let secret = DeviceSecret::generate(&params, "d", &mut rng);
    let mut three: Vec<_> = cosigners.iter_mut().take(3).collect();
    let err = gen_partial_secret(&params, &kgd, &mut three, &secret.request(), &mut rng).unwrap_err();
    assert!(matches!(err, CryptoError::IssuanceFailed(_)));

    let sub = cosign_issuance(&params, &kgd, &mut three, &secret.request(), &mut rng).unwrap();
    let msg = sub.message(secret.commitment);
    assert_eq!(verify_issuance(&params, &kgd, &msg, &sub.signature), Verification::Reject);
    assert!(matches!(
        derive_keys(&params, &kgd, &secret, &sub),
        Err(CryptoError::NotVerified(Verification::Reject))
    ));

    let relaxed = KgdPublic::new(kgd.publics.clone(), 3).unwrap();
    assert_eq!(verify_issuance(&params, &relaxed, &msg, &sub.signature), Verification::Accept);
    let keys = derive_keys(&params, &relaxed, &secret, &sub).unwrap();
    let sig = sign_tx(&params, &keys, b"m", &mut rng).to_bytes(&params);
    assert!(verify_tx_sig(&params, &relaxed, &keys.pk, "d", b"m", &sig));
}

#[test]
fn tampered_issuance() {
    let params = setup_toy(9);
    let mut rng = ChaCha20Rng::seed_from_u64(3);
    let (kgd, mut cosigners) = consortium(&params, 3, &mut rng);
    let (secret, partial, _) = register_device(&params, &kgd, &mut cosigners, "d", &mut rng).unwrap();

    let mut msg = partial.message(secret.commitment);
    msg.id = "e".into();
    assert_eq!(verify_issuance(&params, &kgd, &msg, &partial.signature), Verification::Reject);

    let msg = partial.message(secret.commitment);
    let bytes = partial.signature.to_bytes(&params);
    for i in 0..bytes.len() * 8 {
        let mut b = bytes.clone();
        b[i / 8] ^= 1 << (i % 8);
        let Ok(sig) = MultiSignature::from_bytes(&params, &b) else { continue };
        assert_ne!(verify_issuance(&params, &kgd, &msg, &sig), Verification::Accept, "bit {i}");
    }

    let mut sig = partial.signature.clone();
    sig.signers.insert(3);
    assert_eq!(verify_issuance(&params, &kgd, &msg, &sig), Verification::Indeterminate);
}

#[test]
fn key_halves_are_both_required() {
    let params = setup_toy(11);
    let mut rng = ChaCha20Rng::seed_from_u64(4);
    let (kgd, mut cosigners) = consortium(&params, 2, &mut rng);
    let (_, _, a) = register_device(&params, &kgd, &mut cosigners, "a", &mut rng).unwrap();
    let (_, _, b) = register_device(&params, &kgd, &mut cosigners, "b", &mut rng).unwrap();

    let mut wrong_x = a.clone();
    wrong_x.sk.x = b.sk.x;
    let mut no_ps = a.clone();
    no_ps.sk.ps = 0;
    let mut no_x = a.clone();
    no_x.sk.x = 0;
    for bad in [wrong_x, no_ps, no_x] {
        let sig = sign_tx(&params, &bad, b"m", &mut rng).to_bytes(&params);
        assert!(!verify_tx_sig(&params, &kgd, &a.pk, "a", b"m", &sig));
    }
    let sig = sign_tx(&params, &a, b"m", &mut rng).to_bytes(&params);
    assert!(!verify_tx_sig(&params, &kgd, &b.pk, "b", b"m", &sig), "identity swap");
}

#[test]
fn derive_refuses_foreign_partial_secret() {
    let params = setup_toy(12);
    let mut rng = ChaCha20Rng::seed_from_u64(5);
    let (kgd, mut cosigners) = consortium(&params, 2, &mut rng);
    let (secret_a, partial_a, _) = register_device(&params, &kgd, &mut cosigners, "a", &mut rng).unwrap();
    let (secret_b, _, _) = register_device(&params, &kgd, &mut cosigners, "b", &mut rng).unwrap();
    assert!(matches!(
        derive_keys(&params, &kgd, &secret_b, &partial_a),
        Err(CryptoError::IdentityMismatch { .. })
    ));
    let mut bumped = partial_a.clone();
    bumped.ps = params.group.scalar_add(&bumped.ps, &1);
    assert!(derive_keys(&params, &kgd, &secret_a, &bumped).is_err());
}

#[test]
fn pointer_encryption() {
    let params = setup_standard();
    let mut rng = ChaCha20Rng::seed_from_u64(6);
    let (kgd, mut cosigners) = consortium(&params, 3, &mut rng);
    let (_, _, a) = register_device(&params, &kgd, &mut cosigners, "a", &mut rng).unwrap();
    let (_, _, b) = register_device(&params, &kgd, &mut cosigners, "b", &mut rng).unwrap();
    assert_eq!(a.pk.combined(&params, &kgd, "a").unwrap(), a.combined);
    let c1 = encrypt_pointer(&params, &a.combined, b"device-a", &mut rng);
    let c2 = encrypt_pointer(&params, &a.combined, b"device-a", &mut rng);
    assert_ne!(c1, c2);
    assert_eq!(decrypt_pointer(&params, &a, &c1).unwrap(), b"device-a");
    assert_eq!(decrypt_pointer(&params, &b, &c1), Err(CryptoError::Decryption));
    let mut flipped = c1.clone();
    *flipped.last_mut().unwrap() ^= 1;
    assert_eq!(decrypt_pointer(&params, &a, &flipped), Err(CryptoError::Decryption));
    assert!(decrypt_pointer(&params, &a, &c1[..20]).is_err());
}

#[test]
fn key_serialization() {
    let params = setup_standard();
    let mut rng = ChaCha20Rng::seed_from_u64(8);
    let (kgd, mut cosigners) = consortium(&params, 2, &mut rng);
    let (_, partial, keys) = register_device(&params, &kgd, &mut cosigners, "a", &mut rng).unwrap();
    let bytes = keys.pk.to_bytes(&params);
    assert_eq!(&bytes[..4], b"K256");
    assert_eq!(PublicKey::from_bytes(&params, &bytes).unwrap(), keys.pk);
    assert!(PublicKey::from_bytes(&params, &bytes[..bytes.len() - 1]).is_err());
    let sig = partial.signature.to_bytes(&params);
    assert_eq!(MultiSignature::from_bytes(&params, &sig).unwrap(), partial.signature);
    let s = sign_tx(&params, &keys, b"x", &mut rng);
    assert_eq!(Signature::from_bytes(&params, &s.to_bytes(&params)).unwrap(), s);
    assert!(format!("{:?}", cosigners[0].key()).contains("redacted"));
}

#[test]
fn plain_schnorr() {
    let params = setup_standard();
    let mut rng = ChaCha20Rng::seed_from_u64(10);
    let key = CosignerKey::generate(&params, 0, &mut rng);
    let sig = schnorr_sign(&params, key.secret(), b"vote");
    assert_eq!(sig, schnorr_sign(&params, key.secret(), b"vote"));
    assert!(schnorr_verify(&params, &key.public, b"vote", &sig));
    assert!(!schnorr_verify(&params, &key.public, b"votf", &sig));
    let other = CosignerKey::generate(&params, 1, &mut rng);
    assert!(!schnorr_verify(&params, &other.public, b"vote", &sig));
}
