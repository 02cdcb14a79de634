//! Field widths of the TLS/DTLS 1.2 handshake, one derivation per line.

/// type 1 + version 2 + length 2
pub const TLS_RECORD_HEADER: usize = 5;
/// type 1 + version 2 + epoch 2 + sequence 6 + length 2
pub const DTLS_RECORD_HEADER: usize = 13;
/// msg_type 1 + length 3
pub const TLS_HS_HEADER: usize = 4;
/// msg_type 1 + length 3 + message_seq 2 + fragment_offset 3 + fragment_length 3
pub const DTLS_HS_HEADER: usize = 12;

/// client_version 2 + random 32 + session_id<1> empty 1 + cipher_suites<2> 2 + compression<1> 1 + null 1 + extensions<2> 2
pub const CLIENT_HELLO_FIXED: usize = 41;
/// cookie<1> length byte, DTLS only
pub const CLIENT_HELLO_COOKIE_LEN: usize = 1;
/// one cipher suite code point
pub const CIPHER_SUITE: usize = 2;
/// server_version 2 + random 32 + session_id<1> 1 + 32 + cipher_suite 2 + compression 1 + extensions<2> 2
pub const SERVER_HELLO_FIXED: usize = 72;
/// server_version 2 + cookie<1> 1
pub const HELLO_VERIFY_FIXED: usize = 3;
/// stateless cookie carried by HelloVerifyRequest and the second ClientHello
pub const COOKIE: usize = 32;

/// extension_type 2 + extension_data<2> 2
pub const EXT_HEADER: usize = 4;
/// extended_master_secret: empty body
pub const EXT_EMS: usize = EXT_HEADER;
/// ec_point_formats: header 4 + list<1> 1 + uncompressed 1
pub const EXT_POINT_FORMATS: usize = EXT_HEADER + 2;
/// header 4 + list<2> 2, plus 2 per entry
pub const EXT_LIST_FIXED: usize = EXT_HEADER + 2;
/// server_name: header 4 + list<2> 2 + name_type 1 + host_name<2> 2, plus the name
pub const EXT_SNI_FIXED: usize = EXT_HEADER + 5;

/// certificate_list<3> 3 + one ASN.1Cert<3> 3, plus the certificate
pub const CERTIFICATE_FIXED: usize = 6;
/// curve_type 1 + named_curve 2 + point<1> 1
pub const ECDH_PARAMS_FIXED: usize = 4;
/// SignatureAndHashAlgorithm 2 + signature<2> 2
pub const DIGITALLY_SIGNED_FIXED: usize = 4;
/// psk_identity_hint<2>, sent empty
pub const PSK_HINT: usize = 2;
/// psk_identity<2> length
pub const PSK_IDENTITY_LEN: usize = 2;
/// ClientKeyExchange point<1> length
pub const ECDH_POINT_LEN: usize = 1;
/// certificate_types<1> 1 + ecdsa_sign 1 + supported_signature_algorithms<2> 2 + certificate_authorities<2> 2, plus 2 per algorithm
pub const CERTIFICATE_REQUEST_FIXED: usize = 6;
/// empty body
pub const SERVER_HELLO_DONE: usize = 0;
/// change_cipher_spec byte, sent as its own record
pub const CHANGE_CIPHER_SPEC: usize = 1;
/// verify_data
pub const FINISHED: usize = 12;
/// AES-CCM / AES-GCM record: explicit nonce 8 + tag 16
pub const AEAD_EXPANSION: usize = 24;

/// uncompressed point: 1 + 2 * 32
pub const P256_POINT: usize = 65;
/// uncompressed point: 1 + 2 * 66
pub const P521_POINT: usize = 133;
/// DER SEQUENCE 2 + two INTEGERs of 2 + 33
pub const P256_SIGNATURE: usize = 72;
/// DER SEQUENCE 3 + two INTEGERs of 2 + 66
pub const P521_SIGNATURE: usize = 139;
