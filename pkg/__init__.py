# TransCORALNet Package
