use k256::elliptic_curve::bigint::U512;
use k256::elliptic_curve::group::Group as _;
use k256::elliptic_curve::ops::Reduce;
use k256::elliptic_curve::sec1::{FromEncodedPoint, ToEncodedPoint};
use k256::elliptic_curve::PrimeField;
use k256::{AffinePoint, EncodedPoint, FieldBytes, ProjectivePoint, Scalar};

use super::Group;

/// secp256k1 with compressed SEC1 point encoding.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Secp256k1;

impl Group for Secp256k1 {
    type Scalar = Scalar;
    type Element = ProjectivePoint;

    const TAG: [u8; 4] = *b"K256";

    fn name(&self) -> String {
        "secp256k1".into()
    }

    fn order_bits(&self) -> u32 {
        256
    }

    fn scalar_len(&self) -> usize {
        32
    }

    fn element_len(&self) -> usize {
        33
    }

    fn generator(&self) -> ProjectivePoint {
        ProjectivePoint::GENERATOR
    }

    fn identity(&self) -> ProjectivePoint {
        ProjectivePoint::IDENTITY
    }

    fn add(&self, a: &ProjectivePoint, b: &ProjectivePoint) -> ProjectivePoint {
        a + b
    }

    fn mul(&self, e: &ProjectivePoint, k: &Scalar) -> ProjectivePoint {
        e * k
    }

    fn scalar_zero(&self) -> Scalar {
        Scalar::ZERO
    }

    fn scalar_add(&self, a: &Scalar, b: &Scalar) -> Scalar {
        a + b
    }

    fn scalar_mul(&self, a: &Scalar, b: &Scalar) -> Scalar {
        a * b
    }

    fn scalar_from_wide(&self, bytes: &[u8; 64]) -> Scalar {
        <Scalar as Reduce<U512>>::reduce(U512::from_be_slice(bytes))
    }

    fn encode_scalar(&self, s: &Scalar) -> Vec<u8> {
        s.to_bytes().to_vec()
    }

    fn decode_scalar(&self, bytes: &[u8]) -> Option<Scalar> {
        if bytes.len() != 32 {
            return None;
        }
        Scalar::from_repr(*FieldBytes::from_slice(bytes)).into()
    }

    fn encode_element(&self, e: &ProjectivePoint) -> Vec<u8> {
        e.to_affine().to_encoded_point(true).as_bytes().to_vec()
    }

    fn decode_element(&self, bytes: &[u8]) -> Option<ProjectivePoint> {
        if bytes.len() != 33 || !matches!(bytes[0], 0x02 | 0x03) {
            return None;
        }
        let point = EncodedPoint::from_bytes(bytes).ok()?;
        let affine: Option<AffinePoint> = AffinePoint::from_encoded_point(&point).into();
        let p = ProjectivePoint::from(affine?);
        (!bool::from(p.is_identity())).then_some(p)
    }
}
