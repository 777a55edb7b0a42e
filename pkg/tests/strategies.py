"""Hypothesis strategies for the binary codecs."""

from hypothesis import strategies as st

from nbiotsim import fapi, nas, s1ap

u8 = st.integers(0, 0xFF)
u16 = st.integers(0, 0xFFFF)
u32 = st.integers(0, 0xFFFFFFFF)
sfn = st.integers(0, 1023)
sf = st.integers(0, 9)
ce = st.integers(0, 2)

dcis = st.builds(fapi.Dci, rnti=u16, fmt=st.sampled_from(list(fapi.DciFormat)),
                 rnti_type=st.sampled_from(list(fapi.RntiType)), reps=u8, delay=u16, data_reps=u8,
                 subcarrier=u8, duration=u16, retx=st.booleans(), ce_level=ce, tbs=u16)
dl_pdus = st.builds(fapi.DlPdu, rnti=u16, payload=st.binary(max_size=64), reps=u8, duration=u16, ce_level=ce)
ul_grants = st.builds(fapi.UlGrant, rnti=u16, subcarrier=u8, duration=u16, reps=u8, ce_level=ce)

fapi_messages = st.one_of(
    st.builds(fapi.SubframeIndication, sfn=sfn, sf=sf),
    st.builds(fapi.DlConfigRequest, sfn=sfn, sf=sf, dci_list=st.lists(dcis, max_size=4).map(tuple),
              pdu_list=st.lists(dl_pdus, max_size=3).map(tuple)),
    st.builds(fapi.UlConfigRequest, sfn=sfn, sf=sf, grants=st.lists(ul_grants, max_size=4).map(tuple)),
    st.builds(fapi.RachIndication, sfn=sfn, sf=sf, subcarrier=st.integers(0, 47), ce_level_hint=ce),
    st.builds(fapi.RxIndication, rnti=u16, payload=st.binary(max_size=64), sfn=sfn, sf=sf),
    st.builds(fapi.CrcIndication, rnti=u16, passed=st.booleans(), sfn=sfn, sf=sf),
    st.builds(fapi.HarqIndication, rnti=u16, ack=st.booleans(), sfn=sfn, sf=sf),
)

imsis = st.text("0123456789", min_size=5, max_size=15)
ipv4s = st.tuples(u8, u8, u8, u8).map(lambda t: ".".join(map(str, t)))

nas_messages = st.one_of(
    st.builds(nas.AttachRequest, imsi=imsis, epco=st.booleans()),
    st.just(nas.IdentityRequest()),
    st.builds(nas.IdentityResponse, imsi=imsis),
    st.builds(nas.AuthenticationRequest, rand=st.binary(min_size=16, max_size=16)),
    st.builds(nas.AuthenticationResponse, res=st.binary(min_size=8, max_size=8)),
    st.just(nas.AuthenticationReject()),
    st.just(nas.SecurityModeCommand()),
    st.just(nas.SecurityModeComplete()),
    st.builds(nas.AttachAccept, ip=ipv4s),
    st.just(nas.AttachComplete()),
    st.builds(nas.EsmDataTransport, dest_ip=ipv4s, dest_port=u16, payload=st.binary(max_size=64)),
)

s1ap_messages = st.one_of(
    st.builds(s1ap.S1SetupRequest, enb_id=u32, plmn=st.text("0123456789", min_size=5, max_size=6)),
    st.builds(s1ap.S1SetupResponse, mme_name=st.text(st.characters(min_codepoint=32, max_codepoint=126),
                                                     max_size=40)),
    st.builds(s1ap.InitialUEMessage, enb_ue_id=u32, nas=nas_messages),
    st.builds(s1ap.DownlinkNASTransport, mme_ue_id=u32, enb_ue_id=u32, nas=nas_messages),
    st.builds(s1ap.UplinkNASTransport, mme_ue_id=u32, enb_ue_id=u32, nas=nas_messages),
)
