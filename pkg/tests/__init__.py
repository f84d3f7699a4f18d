"""
拍賣實驗室測試套件
auctionlab Test Suite
"""
