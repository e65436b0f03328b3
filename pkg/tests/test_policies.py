import json

import pytest

from inforesale.model import DomainError, MarketConfig, enumerate_states, opportunities
from inforesale.policies import (Item, PolicyError, UnsupportedConfig, custom_policy_from_table,
                                 designated_first_buyer_policy, immediate_agreement_policy,
                                 load_policy_table, parse_policy_spec, prepay_policy)


def all_opps(cfg):
    return [o for s in enumerate_states(cfg) for o in opportunities(cfg, s)]


def test_immediate_trades_everywhere():
    cfg = MarketConfig(3, 2)
    pol = immediate_agreement_policy(cfg)
    assert all(pol.decide(*o) for o in all_opps(cfg))
    assert opportunities(cfg, cfg.full_mask) == []


def test_outside_domain_rejected():
    cfg = MarketConfig(2)
    pol = immediate_agreement_policy(cfg)
    with pytest.raises(DomainError):
        pol.decide(0, 1, 0b011)  # both informed
    with pytest.raises(DomainError):
        pol.decide(1, 2, 0b001)  # seller uninformed
    with pytest.raises(DomainError):
        pol.decide(0, 1, 0b010)  # not a valid state


def test_first_buyer_rules():
    cfg = MarketConfig(3)
    pol = designated_first_buyer_policy(cfg, 2)
    assert pol.decide(0, 2, 0b0001)
    assert not pol.decide(0, 1, 0b0001) and not pol.decide(0, 3, 0b0001)
    assert all(pol.decide(*o) for o in all_opps(cfg) if o.state != 0b0001)
    assert pol.describe() == "first-buyer:2"


def test_first_buyer_needs_single_seller():
    with pytest.raises(UnsupportedConfig):
        designated_first_buyer_policy(MarketConfig(2, 2), 2)
    with pytest.raises(UnsupportedConfig):
        designated_first_buyer_policy(MarketConfig(2), 0)


def test_prepay_rules():
    cfg = MarketConfig(3)
    pol = prepay_policy(cfg)
    assert pol.n_tokens == 2
    assert pol.decide(0, 1, Item.TOKEN, 0b0001, 0)
    assert not pol.decide(0, 1, Item.INFO, 0b0001, 0)
    # supply exhausted: only the buyer without a token gets information
    assert not pol.decide(0, 1, Item.INFO, 0b0001, 0b0110)
    assert pol.decide(0, 3, Item.INFO, 0b0001, 0b0110)
    # after the first sale: immediate agreement on information, no tokens
    for tokens in (0, 0b0110):
        assert pol.decide(1, 2, Item.INFO, 0b0011, tokens)
    assert not pol.decide(0, 2, Item.TOKEN, 0b0011, 0)
    # buyer-to-buyer token resale never happens
    assert not pol.decide(1, 3, Item.TOKEN, 0b0001, 0b0010)


def test_prepay_needs_single_seller():
    with pytest.raises(UnsupportedConfig):
        prepay_policy(MarketConfig(2, 2))


def test_token_feasibility():
    pol = prepay_policy(MarketConfig(2))
    with pytest.raises(DomainError):
        pol.decide(1, 0, Item.TOKEN, 0b001, 0)  # the seller never buys a token
    with pytest.raises(DomainError):
        pol.decide(0, 1, Item.TOKEN, 0b001, 0b010)  # supply of one token is gone


def test_table_all_trade_matches_immediate():
    cfg = MarketConfig(2, 2)
    table = {(o.seller, o.buyer, o.state): True for o in all_opps(cfg)}
    pol = custom_policy_from_table(cfg, table)
    imm = immediate_agreement_policy(cfg)
    assert all(pol.decide(*o) == imm.decide(*o) for o in all_opps(cfg))


def test_table_default_fills_gap():
    cfg = MarketConfig(2)
    opps = all_opps(cfg)
    table = {(o.seller, o.buyer, o.state): True for o in opps[1:]}
    pol = custom_policy_from_table(cfg, table, default="no-trade")
    assert not pol.decide(*opps[0])
    assert all(pol.decide(*o) for o in opps[1:])


def test_table_missing_entries_listed():
    cfg = MarketConfig(2)
    with pytest.raises(PolicyError, match=f"^{len(all_opps(cfg))} opportunities missing"):
        custom_policy_from_table(cfg, {})


def test_load_table(tmp_path):
    cfg = MarketConfig(2)
    path = tmp_path / "t.json"
    path.write_text(json.dumps({"default": False, "entries": [
        {"seller": 0, "buyer": 1, "state_mask": "0x1", "decision": "trade"}]}))
    pol = load_policy_table(cfg, path)
    assert pol.decide(0, 1, 1) and not pol.decide(0, 2, 1)


def test_load_typed_table(tmp_path):
    cfg = MarketConfig(2)
    path = tmp_path / "t.json"
    path.write_text(json.dumps({"default": False, "entries": [
        {"seller": 0, "buyer": 1, "item": 1, "state_mask": 1, "token_mask": 0, "decision": True}]}))
    pol = load_policy_table(cfg, path)
    assert pol.decide(0, 1, Item.TOKEN, 1, 0)
    assert not pol.decide(0, 2, Item.TOKEN, 1, 0)


def test_load_table_errors(tmp_path):
    cfg = MarketConfig(2)
    path = tmp_path / "t.json"
    path.write_text(json.dumps([{"seller": 0, "decision": True}]))
    with pytest.raises(PolicyError):
        load_policy_table(cfg, path)
    path.write_text(json.dumps([{"seller": 0, "buyer": 1, "state_mask": 1, "decision": "maybe"}]))
    with pytest.raises(PolicyError):
        load_policy_table(cfg, path)


@pytest.mark.parametrize("spec,kind", [("immediate", "immediate"), ("prepay", "prepay"),
                                       ("first-buyer:2", "first-buyer")])
def test_parse_spec(spec, kind):
    assert parse_policy_spec(MarketConfig(2), spec).kind == kind


@pytest.mark.parametrize("spec", ["nope", "first-buyer:x"])
def test_parse_spec_errors(spec):
    with pytest.raises(PolicyError):
        parse_policy_spec(MarketConfig(2), spec)
